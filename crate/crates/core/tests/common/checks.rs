use std::collections::BTreeSet;
use std::sync::Arc;

use hybrid_inversion::grid_mesh::{HybridMesh, Point, SimplicialMesh};
use hybrid_inversion::inversion::{make_observations, InversionProblem, ObjectiveConfig};
use hybrid_inversion::media::{map_media, sample_to_mesh, MediaNumber};
use hybrid_inversion::wavesolver::{cfl_dt, solve_forward_full, solve_pure_fd, HybridOperator, PulseProfile, SolverOptions};
use hybrid_inversion::{CoefficientField, MediaTable, SolverError, SourcePulse, TimeGrid, VoxelPhantom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{coarse_block_lookup, square_mesh, SmoothField};

pub fn coeffs_with(mesh: &HybridMesh, eps: impl Fn(&Point) -> f64, sigma: impl Fn(&Point) -> f64) -> CoefficientField {
    let nodes = mesh.fem_mesh().nodes();
    CoefficientField::new(nodes.iter().map(&eps).collect(), nodes.iter().map(&sigma).collect(), 10.0, 2.0).unwrap()
}

/// Relative errors between the adjoint directional derivative and central
/// differences of J in five random directions, with random smooth
/// coefficients on a 289-node FE box.
pub fn gradient_errors(freeze_sigma: bool, gamma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 32.0);
    assert!(mesh.fem_mesh().node_count() <= 500);
    let pulse = SourcePulse::velocity_bump([0.5, 0.12, 0.0], 0.1, 1.0, [0.6, 0.8, 0.0]);
    let tg = TimeGrid::from_cfl(&mesh, 1.0, 0.5).unwrap();
    let n = mesh.fem_mesh().node_count();
    let frozen = mesh.frozen_mask().to_vec();

    let field = |rng: &mut ChaCha8Rng, scale: f64, base: f64| -> Vec<f64> {
        SmoothField::random(rng, &mesh).sample(&mesh).iter().map(|v| base + scale * v).collect()
    };
    let truth = CoefficientField::new(field(&mut rng, 8.0, 1.0), field(&mut rng, 2.0, 0.0), 10.0, 2.0).unwrap();
    let at = CoefficientField::new(field(&mut rng, 6.0, 1.5), field(&mut rng, 1.5, 0.2), 10.0, 2.0).unwrap();
    let obs = make_observations(&mesh, &truth, &pulse, &tg, 0.0, 0).unwrap();
    let prior = CoefficientField::new(field(&mut rng, 3.0, 1.0), vec![0.1; n], 10.0, 2.0).unwrap();
    let cfg = ObjectiveConfig::new(gamma, gamma, &prior, 0.25);
    let problem = InversionProblem { mesh: &mesh, pulse: &pulse, tg, obs: &obs, objective: &cfg, freeze_sigma };
    let ev = problem.evaluate(&at).unwrap();
    let mass = mesh.fem_mesh().lumped_mass();

    let mut errs = Vec::new();
    for _ in 0..5 {
        let mut de = field(&mut rng, 1.0, 0.0);
        let mut ds = if freeze_sigma { vec![0.0; n] } else { field(&mut rng, 1.0, 0.0) };
        for i in 0..n {
            if frozen[i] {
                de[i] = 0.0;
                ds[i] = 0.0;
            }
        }
        let adj: f64 = (0..n).map(|i| mass[i] * (ev.gradients.g_eps[i] * de[i] + ev.gradients.g_sigma[i] * ds[i])).sum();
        let s = 1e-4;
        let shifted = |sign: f64| {
            let mut c = at.clone();
            for i in 0..n {
                c.eps[i] += sign * s * de[i];
                c.sigma[i] += sign * s * ds[i];
            }
            problem.objective_at(&c).unwrap().j
        };
        let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * s);
        errs.push((adj - fd).abs() / fd.abs());
    }
    errs
}

/// Max-norm difference between the hybrid scheme with unit coefficients and
/// the pure grid scheme over `steps` steps, on every FE node and every
/// grid-owned node, and the solution scale.
pub fn hybrid_minus_pure_fd(steps: usize) -> (f64, f64) {
    let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 32.0);
    let c = CoefficientField::background(mesh.fem_mesh().node_count(), 10.0, 2.0);
    let dt = cfl_dt(&mesh, 0.5);
    let tg = TimeGrid::with_steps(steps as f64 * dt, steps);
    let pulse = SourcePulse::velocity_bump([0.45, 0.5, 0.0], 0.2, 1.0, [1.0, 0.5, 0.0]);
    let opts = SolverOptions { snapshot_every: Some(1), ..SolverOptions::default() };
    let a = solve_forward_full(&mesh, &c, &pulse, &tg, &opts).unwrap();
    let b = solve_pure_fd(&mesh, &pulse, &tg, &opts).unwrap();
    let op = HybridOperator::new(&mesh, &c, tg.dt).unwrap();
    let mut diff = 0.0f64;
    for n in 0..=tg.steps {
        for (x, y) in a.history.snapshot(n).iter().zip(b.history.snapshot(n)) {
            diff = diff.max((x - y).abs());
        }
    }
    assert_eq!(a.snapshots.len(), b.snapshots.len());
    for ((_, sa), (_, sb)) in a.snapshots.iter().zip(&b.snapshots) {
        for &i in op.fd_owned() {
            for k in 0..2 {
                diff = diff.max((sa.fd[2 * i + k] - sb.fd[2 * i + k]).abs());
            }
        }
    }
    (diff, a.history.max_abs())
}

pub fn centred_pulse() -> SourcePulse {
    SourcePulse::velocity_bump([0.5, 0.5, 0.0], 0.15, 1.0, [1.0, 0.5, 0.0])
}

pub fn bump(p: &Point, cx: f64, cy: f64, r: f64) -> f64 {
    let s = 1.0 - ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)) / (r * r);
    if s > 0.0 {
        s * s * s
    } else {
        0.0
    }
}

pub fn energies(mesh: &HybridMesh, c: &CoefficientField, tg: &TimeGrid) -> Vec<f64> {
    let opts = SolverOptions { record_energy: true, ..SolverOptions::default() };
    solve_forward_full(mesh, c, &centred_pulse(), tg, &opts).unwrap().energy
}

/// Undamped run of 1000 steps at half the stability limit through a
/// permittivity bump. Returns the largest energy increase over the running
/// minimum and the drift before the pulse reaches the outer boundary, both
/// relative to the initial energy.
pub fn energy_drift() -> (f64, f64) {
    let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 40.0);
    let inner = |p: &Point| (0.3..=0.7).contains(&p[0]) && (0.3..=0.7).contains(&p[1]);
    let c = coeffs_with(&mesh, |p| if inner(p) { 1.0 + 5.0 * bump(p, 0.5, 0.5, 0.15) } else { 1.0 }, |_| 0.0);
    let dt = cfl_dt(&mesh, 0.5);
    let tg = TimeGrid::with_steps(1000.0 * dt, 1000);
    let e = energies(&mesh, &c, &tg);
    assert_eq!(e.len(), 1000);
    let e0 = e[0];
    let mut low = e0;
    let mut growth = 0.0f64;
    for &v in &e {
        growth = growth.max(v - low);
        low = low.min(v);
    }
    let quiet = (0.2 / dt) as usize;
    let drift = e[..quiet].iter().map(|v| (v - e0).abs()).fold(0.0, f64::max);
    (growth / e0, drift / e0)
}

/// 400 unchecked steps at `ratio` times the stability limit; the largest
/// nodal value on success.
pub fn cfl_run(ratio: f64) -> Result<f64, SolverError> {
    let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 32.0);
    let c = CoefficientField::background(mesh.fem_mesh().node_count(), 10.0, 2.0);
    let dt = ratio * cfl_dt(&mesh, 1.0);
    let tg = TimeGrid::with_steps(400.0 * dt, 400);
    let opts = SolverOptions { check_cfl: false, ..SolverOptions::default() };
    let s = solve_forward_full(&mesh, &c, &centred_pulse(), &tg, &opts)?;
    Ok(s.history.max_abs())
}

/// Element indicator computed from scratch: longest edge times the
/// element-mean coefficients.
pub fn indicator_scan(eps: &[f64], sigma: &[f64], mesh: &SimplicialMesh) -> Vec<f64> {
    mesh.elements()
        .map(|e| {
            let mut h = 0.0f64;
            for i in 0..e.len() {
                for j in i + 1..e.len() {
                    let (a, b) = (mesh.node(e[i]), mesh.node(e[j]));
                    h = h.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt());
                }
            }
            let n = e.len() as f64;
            let eb: f64 = e.iter().map(|&i| eps[i]).sum::<f64>() / n;
            let sb: f64 = e.iter().map(|&i| sigma[i]).sum::<f64>() / n;
            h * eb.abs() + h * sb.abs()
        })
        .collect()
}

/// Brute-force marking: every element at or above `beta` times the largest
/// indicator.
pub fn scan_marked(eps: &[f64], sigma: &[f64], mesh: &SimplicialMesh, beta: f64) -> BTreeSet<usize> {
    let ind = indicator_scan(eps, sigma, mesh);
    let max = ind.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..ind.len()).filter(|&k| ind[k] >= beta * max).collect()
}

pub fn checkerboard(n: usize, spacing: f64) -> VoxelPhantom {
    let media = (0..n * n)
        .map(|v| MediaNumber::from_f64(if (v % n + v / n).is_multiple_of(2) { 1.1 } else { 1.2 }).unwrap())
        .collect();
    VoxelPhantom::new(2, [n, n, 1], spacing, media).unwrap()
}

/// Stride-8 sampling of a weighted checkerboard against the coarse block
/// oracle; returns the number of FE nodes checked.
pub fn stride_eight_blocky() -> Result<usize, String> {
    let phantom = checkerboard(64, 1.0 / 64.0);
    let table = MediaTable::default_breast();
    let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 32.0);
    let voxels = map_media(&phantom, &table, 5.0).map_err(|e| e.to_string())?;
    let f = sample_to_mesh(&voxels, &mesh, 8, 10.0, 2.0).map_err(|e| e.to_string())?.field;
    for (i, p) in mesh.fem_mesh().nodes().iter().enumerate() {
        let v = coarse_block_lookup(&phantom, 8, p).ok_or_else(|| format!("node {i} outside the phantom"))?;
        if f.eps[i] != voxels.eps[v] || f.sigma[i] != voxels.sigma[v] {
            return Err(format!("node {i} at {p:?}: ({}, {}) vs ({}, {})", f.eps[i], f.sigma[i], voxels.eps[v], voxels.sigma[v]));
        }
    }
    Ok(mesh.fem_mesh().node_count())
}

/// Polynomial bump `((s-a)(c-s))^4` normalized to peak 1, with derivatives.
#[derive(Clone, Copy)]
struct Bump1 {
    a: f64,
    c: f64,
}

impl Bump1 {
    fn eval(&self, s: f64) -> [f64; 3] {
        if s <= self.a || s >= self.c {
            return [0.0; 3];
        }
        let norm = ((self.c - self.a) / 2.0).powi(8);
        let u = (s - self.a) * (self.c - s);
        let du = self.a + self.c - 2.0 * s;
        [u.powi(4) / norm, 4.0 * u.powi(3) * du / norm, (12.0 * u * u * du * du - 8.0 * u.powi(3)) / norm]
    }
}

struct Manufactured {
    b: Bump1,
    q: Bump1,
    omega: f64,
}

impl Manufactured {
    fn eps(&self, p: &Point) -> f64 {
        1.0 + 3.0 * self.q.eval(p[0])[0] * self.q.eval(p[1])[0]
    }

    fn sigma(&self, p: &Point) -> f64 {
        0.5 * self.q.eval(p[0])[0] * self.q.eval(p[1])[0]
    }

    fn exact(&self, t: f64, p: &Point) -> [f64; 3] {
        [self.b.eval(p[0])[0] * self.b.eval(p[1])[0] * (self.omega * t).cos(), 0.0, 0.0]
    }

    /// `eps E'' + sigma E' - lap E - grad((eps - 1) div E)` for
    /// `E = (b(x) b(y) cos wt, 0)`.
    fn forcing(&self, t: f64, p: &Point) -> [f64; 3] {
        let [bx, bx1, bx2] = self.b.eval(p[0]);
        let [by, by1, by2] = self.b.eval(p[1]);
        let [qx, qx1, _] = self.q.eval(p[0]);
        let [qy, qy1, _] = self.q.eval(p[1]);
        let (cw, sw) = ((self.omega * t).cos(), (self.omega * t).sin());
        let phi = bx * by;
        let lap = bx2 * by + bx * by2;
        let x_fac = qx * bx1;
        let dx_fac = qx1 * bx1 + qx * bx2;
        let y_fac = qy * by;
        let dy_fac = qy1 * by + qy * by1;
        let fx = -self.eps(p) * self.omega * self.omega * phi * cw - self.sigma(p) * self.omega * phi * sw - lap * cw
            - 3.0 * dx_fac * y_fac * cw;
        let fy = -3.0 * x_fac * dy_fac * cw;
        [fx, fy, 0.0]
    }
}

fn mms_error(level: u32, base_steps: usize, t_end: f64) -> f64 {
    let h = 1.0 / (16.0 * 2f64.powi(level as i32));
    let mesh = square_mesh(1.0, 0.25, 0.75, h);
    let ms = Arc::new(Manufactured { b: Bump1 { a: 0.15, c: 0.85 }, q: Bump1 { a: 0.35, c: 0.65 }, omega: 4.0 });
    let c = coeffs_with(&mesh, |p| ms.eps(p), |p| ms.sigma(p));
    let tg = TimeGrid::with_steps(t_end, base_steps << level);
    let (m0, m1) = (ms.clone(), ms.clone());
    let pulse = SourcePulse {
        f0: PulseProfile::Custom(Arc::new(move |p: &Point| m0.exact(0.0, p))),
        f1: PulseProfile::Zero,
        forcing: None,
    }
    .with_forcing(move |t, p| m1.forcing(t, p));
    let opts = SolverOptions { snapshot_every: Some(1), ..SolverOptions::default() };
    let sol = solve_forward_full(&mesh, &c, &pulse, &tg, &opts).unwrap();
    let op = HybridOperator::new(&mesh, &c, tg.dt).unwrap();
    let (wfd, wfe) = op.owned_weights();
    let mut err2 = 0.0;
    for (n, state) in &sol.snapshots {
        let t = tg.time(*n);
        let mut s = 0.0;
        for &(i, w) in &wfd {
            let e = ms.exact(t, &op.grid().coord(i));
            s += w * ((state.fd[2 * i] - e[0]).powi(2) + (state.fd[2 * i + 1] - e[1]).powi(2));
        }
        for &(i, w) in &wfe {
            let e = ms.exact(t, &op.fe_nodes()[i]);
            s += w * ((state.fe[2 * i] - e[0]).powi(2) + (state.fe[2 * i + 1] - e[1]).powi(2));
        }
        err2 += tg.trapezoid_weight(*n) * s;
    }
    err2.sqrt()
}

/// Observed L2(space-time) orders between consecutive levels.
pub fn mms_orders() -> Vec<f64> {
    let base = TimeGrid::from_cfl(&square_mesh(1.0, 0.25, 0.75, 1.0 / 16.0), 0.5, 0.5).unwrap().steps;
    let e: Vec<f64> = (0..3).map(|l| mms_error(l, base, 0.5)).collect();
    e.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

