use crate::grid_mesh::HybridMesh;
use crate::media::CoefficientField;

use super::operator::StepKind;
use super::{cfl_dt, BoundaryTrace, FieldHistory, HybridOperator, HybridState, SolverError, SourcePulse, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Reject time steps above the CFL limit before running.
    pub check_cfl: bool,
    /// Abort once `max |E|` exceeds this multiple of the data scale.
    pub growth_limit: f64,
    pub record_energy: bool,
    /// Keep the full state every this many steps.
    pub snapshot_every: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { check_cfl: true, growth_limit: 1e6, record_energy: false, snapshot_every: None }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    /// FE node values at every level, box surface included.
    pub history: FieldHistory,
    pub trace: BoundaryTrace,
    /// Modified energy between levels `n` and `n + 1`, when recorded.
    pub energy: Vec<f64>,
    pub snapshots: Vec<(usize, HybridState)>,
}

fn empty_trace(op: &HybridOperator, tg: &TimeGrid) -> BoundaryTrace {
    let nodes = op.outer_boundary_nodes().to_vec();
    let coords = nodes.iter().map(|&i| op.grid().coord(i)).collect();
    BoundaryTrace::zeros(op.dim(), nodes, coords, tg.times())
}

fn record_trace(trace: &mut BoundaryTrace, n: usize, x: &HybridState) {
    let d = trace.dim();
    let nodes = trace.nodes().to_vec();
    let dst = trace.at_mut(n);
    for (j, &g) in nodes.iter().enumerate() {
        dst[j * d..(j + 1) * d].copy_from_slice(&x.fd[g * d..(g + 1) * d]);
    }
}

fn check_finite(x: &HybridState, step: usize, scale: f64, limit: f64) -> Result<(), SolverError> {
    let m = x.max_abs();
    if !m.is_finite() {
        return Err(SolverError::NonFinite { step });
    }
    if scale > 0.0 && m > limit * scale {
        return Err(SolverError::Diverged { step, value: m, limit: limit * scale });
    }
    Ok(())
}

/// Runs the forward leapfrog on `op`, calling `observer` with every level
/// (ghosts filled). Returns the energy sequence if requested.
pub(crate) fn run_forward(
    op: &HybridOperator,
    pulse: &SourcePulse,
    tg: &TimeGrid,
    opts: &SolverOptions,
    observer: &mut dyn FnMut(usize, &HybridState),
) -> Result<Vec<f64>, SolverError> {
    let mut x0 = op.sample_owned(|p| pulse.f0.eval(p));
    op.exchange(&mut x0);
    let f1 = op.sample_owned(|p| pulse.f1.eval(p));
    check_finite(&x0, 0, 0.0, 0.0)?;
    check_finite(&f1, 0, 0.0, 0.0)?;
    observer(0, &x0);

    let mut rhs = pulse.forcing.as_ref().map(|_| op.zero_state());
    let mut fmax = 0.0f64;
    let mut load = |t: f64, rhs: &mut Option<HybridState>| {
        if let (Some(f), Some(r)) = (pulse.forcing.as_ref(), rhs.as_mut()) {
            fmax = fmax.max(op.load(|p| (f.0)(t, p), r));
        }
        fmax
    };

    let mut energy = Vec::new();
    let mut lx = op.zero_state();
    op.lx_filled(&x0, &mut lx);
    let mut fm = load(0.0, &mut rhs);
    let mut x1 = op.zero_state();
    op.first_update(&x0, &f1, &lx, rhs.as_ref(), &mut x1);
    op.exchange(&mut x1);
    let base = x0.max_abs().max(x1.max_abs()).max(tg.t_end * f1.max_abs());
    let scale = |fm: f64| base + tg.t_end * tg.t_end * fm;
    check_finite(&x1, 1, scale(fm), opts.growth_limit)?;
    observer(1, &x1);
    if opts.record_energy {
        energy.push(op.energy_with(&x0, &x1, &lx));
    }

    let (mut prev, mut curr) = (x0, x1);
    let mut next = op.zero_state();
    for n in 1..tg.steps {
        op.lx_filled(&curr, &mut lx);
        fm = load(tg.time(n), &mut rhs);
        op.update(Some(&prev), &curr, &lx, rhs.as_ref(), StepKind::Standard, &mut next);
        op.exchange(&mut next);
        check_finite(&next, n + 1, scale(fm), opts.growth_limit)?;
        observer(n + 1, &next);
        if opts.record_energy {
            energy.push(op.energy_with(&curr, &next, &lx));
        }
        std::mem::swap(&mut prev, &mut curr);
        std::mem::swap(&mut curr, &mut next);
    }
    Ok(energy)
}

fn collect_forward(op: &HybridOperator, pulse: &SourcePulse, tg: &TimeGrid, opts: &SolverOptions, fe_map: Option<&[usize]>) -> Result<ForwardSolution, SolverError> {
    let d = op.dim();
    let n_fe = fe_map.map_or(op.fe_nodes().len(), |m| m.len());
    let mut history = FieldHistory::zeros(d, n_fe, tg.steps + 1);
    let mut trace = empty_trace(op, tg);
    let mut snapshots = Vec::new();
    let energy = run_forward(op, pulse, tg, opts, &mut |n, x| {
        match fe_map {
            None => history.snapshot_mut(n).copy_from_slice(&x.fe),
            Some(map) => {
                let dst = history.snapshot_mut(n);
                for (f, &g) in map.iter().enumerate() {
                    dst[f * d..(f + 1) * d].copy_from_slice(&x.fd[g * d..(g + 1) * d]);
                }
            }
        }
        record_trace(&mut trace, n, x);
        if let Some(every) = opts.snapshot_every {
            if every > 0 && n % every == 0 {
                let mut s = x.clone();
                op.fill_covered(&mut s);
                snapshots.push((n, s));
            }
        }
    })?;
    Ok(ForwardSolution { history, trace, energy, snapshots })
}

/// Forward solve; returns the FE history and the trace on the outer boundary.
pub fn solve_forward(
    mesh: &HybridMesh,
    coeffs: &CoefficientField,
    pulse: &SourcePulse,
    tg: &TimeGrid,
) -> Result<(FieldHistory, BoundaryTrace), SolverError> {
    let s = solve_forward_full(mesh, coeffs, pulse, tg, &SolverOptions::default())?;
    Ok((s.history, s.trace))
}

pub fn solve_forward_full(
    mesh: &HybridMesh,
    coeffs: &CoefficientField,
    pulse: &SourcePulse,
    tg: &TimeGrid,
    opts: &SolverOptions,
) -> Result<ForwardSolution, SolverError> {
    if opts.check_cfl {
        let limit = cfl_dt(mesh, 1.0);
        if tg.dt > limit * (1.0 + 1e-12) {
            return Err(SolverError::Cfl { dt: tg.dt, limit });
        }
    }
    let op = HybridOperator::new(mesh, coeffs, tg.dt)?;
    collect_forward(&op, pulse, tg, opts, None)
}

/// Reference solve with the plain FD scheme on the whole grid of `mesh`
/// (`eps = 1`, `sigma = 0`). The history holds the grid values at the FE
/// node positions.
pub fn solve_pure_fd(mesh: &HybridMesh, pulse: &SourcePulse, tg: &TimeGrid, opts: &SolverOptions) -> Result<ForwardSolution, SolverError> {
    let op = HybridOperator::pure_fd(mesh, tg.dt)?;
    let map: Vec<usize> = mesh
        .fem_mesh()
        .nodes()
        .iter()
        .map(|p| mesh.fdm_grid().node_at(p, 1e-9))
        .collect::<Option<_>>()
        .ok_or_else(|| SolverError::Mismatch("FE node off the grid".into()))?;
    collect_forward(&op, pulse, tg, opts, Some(&map))
}

/// Leapfrog from rest, `x^{-1} = x^0 = 0`, with raw nodal sources:
/// `D+ x^{n+1} = c x^n - D- x^{n-1} - L G x^n + s^n` for `n < steps`.
/// `source(n, s)` fills `s^n` on owned rows.
pub fn leapfrog_with_sources(
    op: &HybridOperator,
    tg: &TimeGrid,
    source: &mut dyn FnMut(usize, &mut HybridState),
    observer: &mut dyn FnMut(usize, &HybridState),
) {
    let mut prev = op.zero_state();
    let mut curr = op.zero_state();
    let mut next = op.zero_state();
    let mut lx = op.zero_state();
    let mut s = op.zero_state();
    observer(0, &curr);
    for n in 0..tg.steps {
        s.fd.iter_mut().chain(s.fe.iter_mut()).for_each(|v| *v = 0.0);
        source(n, &mut s);
        op.lx_filled(&curr, &mut lx);
        op.update(Some(&prev), &curr, &lx, Some(&s), StepKind::Standard, &mut next);
        op.exchange(&mut next);
        observer(n + 1, &next);
        std::mem::swap(&mut prev, &mut curr);
        std::mem::swap(&mut curr, &mut next);
    }
}

/// Backward recurrence for the multipliers `mu^k` of the discrete forward
/// equations, `k = steps-1 .. 0`:
///
/// ```text
/// P^{k-1} mu^{k-1} = -g^k - (L^T - c) mu^k - D- mu^{k+1},  mu^steps = mu^{steps+1} = 0
/// ```
///
/// with `P^0 = c` and `P^k = D+` otherwise. `g(k, out)` fills the derivative
/// of the objective with respect to `x^k` on owned rows. `observer` sees
/// every `mu^k`, `k = steps .. 0`; ghost entries are zero.
pub fn adjoint_recurrence(
    op: &HybridOperator,
    tg: &TimeGrid,
    g: &mut dyn FnMut(usize, &mut HybridState),
    observer: &mut dyn FnMut(usize, &HybridState),
) -> Result<(), SolverError> {
    let n = tg.steps;
    let mut after = op.zero_state();
    let mut curr = op.zero_state();
    let mut next = op.zero_state();
    let mut lt = op.zero_state();
    let mut rhs = op.zero_state();
    observer(n, &curr);
    for k in (1..=n).rev() {
        rhs.fd.iter_mut().chain(rhs.fe.iter_mut()).for_each(|v| *v = 0.0);
        g(k, &mut rhs);
        rhs.fd.iter_mut().chain(rhs.fe.iter_mut()).for_each(|v| *v = -*v);
        op.apply_fd(&curr.fd, &mut lt.fd);
        op.apply_fe(&curr.fe, &mut lt.fe);
        op.exchange_transpose(&mut lt);
        let kind = if k == 1 { StepKind::Closing } else { StepKind::Standard };
        op.update(Some(&after), &curr, &lt, Some(&rhs), kind, &mut next);
        if !next.max_abs().is_finite() {
            return Err(SolverError::NonFinite { step: k - 1 });
        }
        observer(k - 1, &next);
        std::mem::swap(&mut after, &mut curr);
        std::mem::swap(&mut curr, &mut next);
    }
    Ok(())
}

/// Adjoint solve for the boundary misfit `1/2 sum_n tau_n z_n |r^n|^2_Gamma`
/// with trapezoidal weights `tau_n` and lumped boundary quadrature.
/// Returns `lambda^k = mu^k / dt` on the FE nodes, `lambda^steps = 0`.
pub fn solve_adjoint(
    mesh: &HybridMesh,
    coeffs: &CoefficientField,
    residual: &BoundaryTrace,
    z: &[f64],
    tg: &TimeGrid,
) -> Result<FieldHistory, SolverError> {
    let op = HybridOperator::new(mesh, coeffs, tg.dt)?;
    solve_adjoint_with(&op, residual, z, tg)
}

pub fn solve_adjoint_with(op: &HybridOperator, residual: &BoundaryTrace, z: &[f64], tg: &TimeGrid) -> Result<FieldHistory, SolverError> {
    let d = op.dim();
    if residual.times().len() != tg.steps + 1 || z.len() != tg.steps + 1 {
        return Err(SolverError::Mismatch(format!(
            "residual has {} levels, z has {}, time grid has {}",
            residual.times().len(),
            z.len(),
            tg.steps + 1
        )));
    }
    if residual.nodes() != op.outer_boundary_nodes() || residual.dim() != d {
        return Err(SolverError::Mismatch("residual nodes differ from the outer boundary".into()));
    }
    let weights: Vec<f64> = residual.nodes().iter().map(|&g| op.boundary_weight(g)).collect();
    let mut lambda = FieldHistory::zeros(d, op.fe_nodes().len(), tg.steps + 1);
    let inv_dt = 1.0 / tg.dt;
    adjoint_recurrence(
        op,
        tg,
        &mut |k, out| {
            let s = tg.trapezoid_weight(k) * z[k];
            if s == 0.0 {
                return;
            }
            let r = residual.at(k);
            for (j, &g) in residual.nodes().iter().enumerate() {
                for c in 0..d {
                    out.fd[g * d + c] = s * weights[j] * r[j * d + c];
                }
            }
        },
        &mut |k, mu| {
            let dst = lambda.snapshot_mut(k);
            for (v, m) in dst.iter_mut().zip(&mu.fe) {
                *v = m * inv_dt;
            }
        },
    )?;
    Ok(lambda)
}

/// Modified leapfrog energy of the level pair `(curr, next)`.
pub fn discrete_energy(op: &HybridOperator, curr: &HybridState, next: &HybridState) -> f64 {
    let mut c = curr.clone();
    op.exchange(&mut c);
    let mut lx = op.zero_state();
    op.lx_filled(&c, &mut lx);
    op.energy_with(&c, next, &lx)
}
