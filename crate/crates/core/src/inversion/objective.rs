use crate::grid_mesh::HybridMesh;
use crate::media::CoefficientField;
use crate::wavesolver::{
    solve_adjoint_with, BoundaryTrace, FieldHistory, HybridOperator, SolverOptions, SourcePulse, TimeGrid,
};

use super::InversionError;

/// Weights of the Tikhonov functional.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub gamma_eps: f64,
    pub gamma_sigma: f64,
    pub eps_prior: Vec<f64>,
    pub sigma_prior: Vec<f64>,
    /// Fraction of `[0, T]` at the end over which `z` decays to zero.
    pub z_cutoff: f64,
    /// Outer boundary nodes whose data enter the misfit; `None` means all.
    pub obs_mask: Option<Vec<bool>>,
}

impl ObjectiveConfig {
    pub fn new(gamma_eps: f64, gamma_sigma: f64, prior: &CoefficientField, z_cutoff: f64) -> Self {
        Self {
            gamma_eps,
            gamma_sigma,
            eps_prior: prior.eps.clone(),
            sigma_prior: prior.sigma.clone(),
            z_cutoff,
            obs_mask: None,
        }
    }

    pub fn validate(&self, fe_nodes: usize) -> Result<(), InversionError> {
        let ok = |g: f64| g.is_finite() && g >= 0.0;
        if !ok(self.gamma_eps) || !ok(self.gamma_sigma) {
            return Err(InversionError::Config("regularization weights must be finite and >= 0".into()));
        }
        if !(self.z_cutoff > 0.0 && self.z_cutoff < 1.0) {
            return Err(InversionError::Config(format!("z_cutoff {} outside (0, 1)", self.z_cutoff)));
        }
        if self.eps_prior.len() != fe_nodes || self.sigma_prior.len() != fe_nodes {
            return Err(InversionError::Mismatch(format!(
                "priors have {} / {} entries, mesh has {fe_nodes} FE nodes",
                self.eps_prior.len(),
                self.sigma_prior.len()
            )));
        }
        Ok(())
    }
}

/// `z(t) = 1` up to `(1 - c) T`, then `1 - (3 s^2 - 2 s^3)` with `s` running
/// from 0 to 1 over the last `c T`.
pub fn time_weight_z(tg: &TimeGrid, z_cutoff: f64) -> Vec<f64> {
    let start = (1.0 - z_cutoff) * tg.t_end;
    let width = z_cutoff * tg.t_end;
    (0..=tg.steps)
        .map(|n| {
            let s = ((tg.time(n) - start) / width).clamp(0.0, 1.0);
            1.0 - s * s * (3.0 - 2.0 * s)
        })
        .collect()
}

/// Value of the Tikhonov functional split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub j: f64,
    pub misfit: f64,
    pub regularization: f64,
}

/// `trace - obs` with unobserved nodes zeroed.
pub fn masked_residual(trace: &BoundaryTrace, obs: &BoundaryTrace, mask: Option<&[bool]>) -> Result<BoundaryTrace, InversionError> {
    let mut r = trace.difference(obs)?;
    if let Some(mask) = mask {
        if mask.len() != r.nodes().len() {
            return Err(InversionError::Mismatch("observation mask length".into()));
        }
        let d = r.dim();
        let nn = r.nodes().len();
        for (k, v) in r.values_mut().iter_mut().enumerate() {
            if !mask[(k / d) % nn] {
                *v = 0.0;
            }
        }
    }
    Ok(r)
}

/// ```text
/// J = 1/2 |E - E_obs|^2_{z, Gamma_T} + gamma_eps/2 |eps - eps0|^2 + gamma_sigma/2 |sigma - sigma0|^2
/// ```
///
/// with trapezoidal weights in time and lumped quadrature on the boundary
/// and the FE mesh.
pub fn tikhonov(
    mesh: &HybridMesh,
    tg: &TimeGrid,
    trace: &BoundaryTrace,
    obs: &BoundaryTrace,
    z: &[f64],
    coeffs: &CoefficientField,
    cfg: &ObjectiveConfig,
) -> Result<Objective, InversionError> {
    cfg.validate(coeffs.len())?;
    if trace.times().len() != tg.steps + 1 || z.len() != tg.steps + 1 {
        return Err(InversionError::Mismatch("trace and time grid differ".into()));
    }
    let r = masked_residual(trace, obs, cfg.obs_mask.as_deref())?;
    let d = r.dim();
    let grid = mesh.fdm_grid();
    let w: Vec<f64> = r.nodes().iter().map(|&g| grid.boundary_measure(g)).collect();
    let mut misfit = 0.0;
    for n in 0..=tg.steps {
        let s = tg.trapezoid_weight(n) * z[n];
        if s == 0.0 {
            continue;
        }
        let v = r.at(n);
        let mut acc = 0.0;
        for (j, wj) in w.iter().enumerate() {
            for c in 0..d {
                acc += wj * v[j * d + c] * v[j * d + c];
            }
        }
        misfit += s * acc;
    }
    misfit *= 0.5;
    let m = mesh.fem_mesh().lumped_mass();
    let mut reg = 0.0;
    for i in 0..coeffs.len() {
        let de = coeffs.eps[i] - cfg.eps_prior[i];
        let ds = coeffs.sigma[i] - cfg.sigma_prior[i];
        reg += m[i] * (cfg.gamma_eps * de * de + cfg.gamma_sigma * ds * ds);
    }
    reg *= 0.5;
    Ok(Objective { j: misfit + reg, misfit, regularization: reg })
}

/// Pointwise gradients of `J` with respect to `eps` and `sigma` at the FE
/// nodes, as densities in the lumped `L^2` inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientFields {
    pub g_eps: Vec<f64>,
    pub g_sigma: Vec<f64>,
}

impl GradientFields {
    pub fn zeros(n: usize) -> Self {
        Self { g_eps: vec![0.0; n], g_sigma: vec![0.0; n] }
    }
}

/// Lumped `L^2` norm `sqrt(sum_i m_i v_i^2)`.
pub fn l2_norm(mass: &[f64], v: &[f64]) -> f64 {
    mass.iter().zip(v).map(|(m, x)| m * x * x).sum::<f64>().sqrt()
}

/// Gradients from forward and adjoint histories of the discrete problem.
///
/// With `lambda^steps = 0`, at a free FE node `j` of lumped mass `m_j`:
///
/// ```text
/// g_eps   = gamma (eps - eps0) - sum_n (lambda^{n+1} - lambda^n).(E^{n+1} - E^n) / dt
///           - lambda^0.(2 f1 - (E^1 - E^0) / dt)
///           + dt / m_j sum_n sum_{K ∋ j} |K| / (d+1) div(lambda^n)_K div(E^n)_K
/// g_sigma = gamma (sigma - sigma0) + dt lambda^0.f1 + sum_{n>=1} lambda^n.(E^{n+1} - E^{n-1}) / 2
/// ```
///
/// These are the exact derivatives of the discrete functional, a
/// summation-by-parts form of `-lambda(0) f1 - int (lambda_t E_t - div lambda div E)`
/// and `int lambda E_t`. Frozen nodes get zero; so does `g_sigma` when
/// `freeze_sigma` is set.
#[allow(clippy::too_many_arguments)]
pub fn assemble_gradients(
    mesh: &HybridMesh,
    tg: &TimeGrid,
    e_hist: &FieldHistory,
    lambda_hist: &FieldHistory,
    coeffs: &CoefficientField,
    cfg: &ObjectiveConfig,
    pulse: &SourcePulse,
    freeze_sigma: bool,
) -> Result<GradientFields, InversionError> {
    let fem = mesh.fem_mesh();
    let n = fem.node_count();
    let d = mesh.dim();
    let levels = tg.steps + 1;
    if e_hist.node_count() != n || lambda_hist.node_count() != n || e_hist.levels() != levels || lambda_hist.levels() != levels {
        return Err(InversionError::Mismatch("histories do not match mesh and time grid".into()));
    }
    let mass = fem.lumped_mass();
    let frozen = mesh.frozen_mask();
    let dt = tg.dt;
    let f1: Vec<f64> = fem
        .nodes()
        .iter()
        .flat_map(|p| {
            let v = pulse.f1.eval(p);
            v.into_iter().take(d)
        })
        .collect();

    let mut g_eps = vec![0.0; n];
    let mut g_sig = vec![0.0; n];
    let dot = |a: &[f64], i: usize, f: &dyn Fn(usize) -> f64| (0..d).map(|c| a[i * d + c] * f(i * d + c)).sum::<f64>();

    let (l0, e0, e1) = (lambda_hist.snapshot(0), e_hist.snapshot(0), e_hist.snapshot(1));
    for i in 0..n {
        g_eps[i] -= dot(l0, i, &|k| 2.0 * f1[k] - (e1[k] - e0[k]) / dt);
        g_sig[i] += dt * dot(l0, i, &|k| f1[k]);
    }
    for s in 0..tg.steps {
        let (la, lb) = (lambda_hist.snapshot(s), lambda_hist.snapshot(s + 1));
        let (ea, eb) = (e_hist.snapshot(s), e_hist.snapshot(s + 1));
        for i in 0..n {
            g_eps[i] -= (0..d)
                .map(|c| {
                    let k = i * d + c;
                    (lb[k] - la[k]) * (eb[k] - ea[k])
                })
                .sum::<f64>()
                / dt;
        }
        if s >= 1 {
            let ep = e_hist.snapshot(s - 1);
            for i in 0..n {
                g_sig[i] += 0.5 * dot(la, i, &|k| eb[k] - ep[k]);
            }
        }
    }

    let elements: Vec<(f64, Vec<usize>, [[f64; 3]; 4])> = (0..fem.element_count())
        .map(|k| {
            let (vol, grads) = fem.p1_gradients(k);
            (vol, fem.element(k).to_vec(), grads)
        })
        .collect();
    let div = |u: &[f64], nodes: &[usize], grads: &[[f64; 3]; 4]| -> f64 {
        nodes
            .iter()
            .enumerate()
            .map(|(a, &nd)| (0..d).map(|c| u[nd * d + c] * grads[a][c]).sum::<f64>())
            .sum()
    };
    let share = 1.0 / (d as f64 + 1.0);
    let mut acc = vec![0.0; n];
    for s in 0..tg.steps {
        let (l, e) = (lambda_hist.snapshot(s), e_hist.snapshot(s));
        for (vol, nodes, grads) in &elements {
            let dl = div(l, nodes, grads);
            if dl == 0.0 {
                continue;
            }
            let v = vol * share * dl * div(e, nodes, grads);
            for &nd in nodes {
                acc[nd] += v;
            }
        }
    }
    for i in 0..n {
        if frozen[i] {
            g_eps[i] = 0.0;
            g_sig[i] = 0.0;
            continue;
        }
        g_eps[i] += dt * acc[i] / mass[i] + cfg.gamma_eps * (coeffs.eps[i] - cfg.eps_prior[i]);
        g_sig[i] = if freeze_sigma {
            0.0
        } else {
            g_sig[i] + cfg.gamma_sigma * (coeffs.sigma[i] - cfg.sigma_prior[i])
        };
    }
    Ok(GradientFields { g_eps, g_sigma: g_sig })
}

/// Forward data, objective and gradients at one coefficient field.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: Objective,
    pub gradients: GradientFields,
    pub trace: BoundaryTrace,
}

/// Everything fixed during a reconstruction on one mesh.
#[derive(Debug, Clone)]
pub struct InversionProblem<'a> {
    pub mesh: &'a HybridMesh,
    pub pulse: &'a SourcePulse,
    pub tg: TimeGrid,
    pub obs: &'a BoundaryTrace,
    pub objective: &'a ObjectiveConfig,
    pub freeze_sigma: bool,
}

impl InversionProblem<'_> {
    pub fn z(&self) -> Vec<f64> {
        time_weight_z(&self.tg, self.objective.z_cutoff)
    }

    fn check(&self, coeffs: &CoefficientField) -> Result<(), InversionError> {
        self.objective.validate(self.mesh.fem_mesh().node_count())?;
        if coeffs.len() != self.mesh.fem_mesh().node_count() {
            return Err(InversionError::Mismatch("coefficients and mesh differ".into()));
        }
        if self.obs.times().len() != self.tg.steps + 1 || self.obs.nodes() != self.mesh.outer_boundary_nodes() {
            return Err(InversionError::Mismatch("observations are not on the problem's boundary/time grid".into()));
        }
        Ok(())
    }

    /// `J` only (one forward solve).
    pub fn objective_at(&self, coeffs: &CoefficientField) -> Result<Objective, InversionError> {
        self.check(coeffs)?;
        let s = crate::wavesolver::solve_forward_full(self.mesh, coeffs, self.pulse, &self.tg, &SolverOptions::default())?;
        tikhonov(self.mesh, &self.tg, &s.trace, self.obs, &self.z(), coeffs, self.objective)
    }

    /// `J` and its gradients (one forward and one adjoint solve).
    pub fn evaluate(&self, coeffs: &CoefficientField) -> Result<Evaluation, InversionError> {
        self.check(coeffs)?;
        let z = self.z();
        let op = HybridOperator::new(self.mesh, coeffs, self.tg.dt)?;
        let fwd = crate::wavesolver::solve_forward_full(self.mesh, coeffs, self.pulse, &self.tg, &SolverOptions::default())?;
        let objective = tikhonov(self.mesh, &self.tg, &fwd.trace, self.obs, &z, coeffs, self.objective)?;
        let r = masked_residual(&fwd.trace, self.obs, self.objective.obs_mask.as_deref())?;
        let lambda = solve_adjoint_with(&op, &r, &z, &self.tg)?;
        let gradients = assemble_gradients(
            self.mesh,
            &self.tg,
            &fwd.history,
            &lambda,
            coeffs,
            self.objective,
            self.pulse,
            self.freeze_sigma,
        )?;
        Ok(Evaluation { objective, gradients, trace: fwd.trace })
    }
}
