mod common;

use common::checks::scan_marked;
use common::square_mesh;
use hybrid_inversion::grid_mesh::{refine_elements, HybridMesh};
use hybrid_inversion::inversion::{
    add_noise, assemble_gradients, cga_iterate, fletcher_reeves, make_observations, mark_for_refinement, run_acga, run_cga,
    stop_test, tikhonov, time_weight_z, AcgaConfig, AcgaInputs, CgaConfig, InversionProblem, ObjectiveConfig,
    ReconstructionState, StopReason,
};
use hybrid_inversion::wavesolver::{solve_adjoint, solve_forward, FieldHistory};
use hybrid_inversion::{BoundaryTrace, CoefficientField, SourcePulse, TimeGrid};
use proptest::prelude::*;

fn pulse() -> SourcePulse {
    SourcePulse::velocity_bump([0.5, 0.12, 0.0], 0.1, 1.0, [1.0, 0.0, 0.0])
}

fn inclusion(mesh: &HybridMesh, peak: f64) -> CoefficientField {
    let frozen = mesh.frozen_mask();
    let eps = mesh
        .fem_mesh()
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let r2 = (p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2);
            if frozen[i] {
                1.0
            } else {
                1.0 + (peak - 1.0) * (-r2 / 0.01).exp()
            }
        })
        .collect::<Vec<_>>();
    let n = eps.len();
    CoefficientField::new(eps, vec![0.0; n], 10.0, 2.0).unwrap()
}

fn cga_cfg(alpha: f64, max_iter: usize) -> CgaConfig {
    CgaConfig {
        alpha_eps: alpha,
        alpha_sigma: 1.0,
        eta1_eps: 1e-12,
        eta2_eps: 1e-12,
        eta1_sigma: 1e-12,
        eta2_sigma: 1e-12,
        max_iter,
        freeze_sigma: true,
        backtracking: false,
    }
}

#[test]
fn time_weight_examples() {
    let tg = TimeGrid::with_steps(2.0, 400);
    let z = time_weight_z(&tg, 0.25);
    assert_eq!(z[0], 1.0);
    assert_eq!(z[300], 1.0);
    assert_eq!(z[350], 0.5);
    assert_eq!(z[400], 0.0);
    for c in [0.1, 0.5, 0.9] {
        assert_eq!(*time_weight_z(&tg, c).last().unwrap(), 0.0);
    }
    assert!(z.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn tikhonov_closed_forms() {
    let h = 1.0 / 16.0;
    let mesh = square_mesh(1.0, 0.25, 0.75, h);
    let n = mesh.fem_mesh().node_count();
    let tg = TimeGrid::with_steps(0.8, 40);
    let prior = CoefficientField::background(n, 10.0, 2.0);
    let (_, trace) = solve_forward(&mesh, &prior, &pulse(), &tg).unwrap();

    // Everything matches: J vanishes.
    let cfg = ObjectiveConfig::new(1.0, 1.0, &prior, 0.25);
    let z = time_weight_z(&tg, 0.25);
    assert_eq!(tikhonov(&mesh, &tg, &trace, &trace, &z, &prior, &cfg).unwrap().j, 0.0);

    // Regularization only, constant offsets over the FE box of area 1/4.
    let mut c = prior.clone();
    c.eps.iter_mut().for_each(|e| *e += 2.0);
    c.sigma.iter_mut().for_each(|s| *s += 0.5);
    let cfg = ObjectiveConfig::new(0.3, 0.7, &prior, 0.25);
    let j = tikhonov(&mesh, &tg, &trace, &trace, &z, &c, &cfg).unwrap().j;
    let expect = 0.5 * (0.3 * 4.0 + 0.7 * 0.25) * 0.25;
    assert!((j - expect).abs() < 1e-14, "{j} vs {expect}");

    // Constant residual r on the boundary nodes with x < 1/2, z = 1: the
    // lumped boundary measure of that part is 2 - h.
    let r = 0.3;
    let mut obs = trace.clone();
    let d = obs.dim();
    let nodes = obs.nodes().len();
    let mask: Vec<bool> = obs.coords().iter().map(|p| p[0] < 0.5).collect();
    for nlev in 0..=tg.steps {
        let v = obs.at_mut(nlev);
        for j in 0..nodes {
            v[j * d] -= r;
        }
    }
    let mut cfg = ObjectiveConfig::new(0.0, 0.0, &prior, 0.25);
    cfg.obs_mask = Some(mask);
    let j = tikhonov(&mesh, &tg, &trace, &obs, &vec![1.0; tg.steps + 1], &prior, &cfg).unwrap().j;
    let expect = 0.5 * r * r * (2.0 - h) * tg.t_end;
    assert!((j - expect).abs() < 1e-12 * expect, "{j} vs {expect}");
}

#[test]
fn gradient_trivial_cases() {
    let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 16.0);
    let n = mesh.fem_mesh().node_count();
    let tg = TimeGrid::from_cfl(&mesh, 0.5, 0.5).unwrap();
    let prior = inclusion(&mesh, 4.0);
    let f0_only = SourcePulse {
        f0: hybrid_inversion::wavesolver::PulseProfile::Bump {
            center: [0.5, 0.5, 0.0],
            radius: 0.2,
            amplitude: 1.0,
            polarization: [1.0, 0.0, 0.0],
        },
        f1: hybrid_inversion::wavesolver::PulseProfile::Zero,
        forcing: None,
    };
    let (e_hist, _) = solve_forward(&mesh, &prior, &f0_only, &tg).unwrap();
    let lambda = FieldHistory::zeros(2, n, tg.steps + 1);
    let cfg = ObjectiveConfig::new(1.0, 1.0, &prior, 0.25);
    let g = assemble_gradients(&mesh, &tg, &e_hist, &lambda, &prior, &cfg, &f0_only, false).unwrap();
    assert!(g.g_eps.iter().chain(&g.g_sigma).all(|&v| v == 0.0));

    let k = (0..n).find(|&i| !mesh.frozen_mask()[i]).unwrap();
    let mut c = prior.clone();
    c.eps[k] += 2.0;
    let g = assemble_gradients(&mesh, &tg, &e_hist, &lambda, &c, &cfg, &f0_only, false).unwrap();
    assert_eq!(g.g_eps[k], 2.0);
    for i in (0..n).filter(|&i| i != k) {
        assert_eq!(g.g_eps[i], 0.0);
    }
}

#[test]
fn truth_is_stationary_for_exact_data() {
    let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 16.0);
    let truth = inclusion(&mesh, 6.0);
    let mut truth = truth;
    for (i, p) in mesh.fem_mesh().nodes().iter().enumerate() {
        if !mesh.frozen_mask()[i] {
            truth.sigma[i] = 0.5 + p[0];
        }
    }
    let tg = TimeGrid::from_cfl(&mesh, 1.0, 0.5).unwrap();
    let p = pulse();
    let obs = make_observations(&mesh, &truth, &p, &tg, 0.0, 0).unwrap();
    let cfg = ObjectiveConfig::new(0.0, 0.0, &truth, 0.25);
    let problem = InversionProblem { mesh: &mesh, pulse: &p, tg, obs: &obs, objective: &cfg, freeze_sigma: false };
    let ev = problem.evaluate(&truth).unwrap();
    let residual = ev.trace.difference(&obs).unwrap();
    assert!(residual.values().iter().all(|v| v.abs() <= 1e-10));
    let lambda = solve_adjoint(&mesh, &truth, &residual, &problem.z(), &tg).unwrap();
    assert!(lambda.max_abs() <= 1e-10);
    assert!(ev.gradients.g_eps.iter().chain(&ev.gradients.g_sigma).all(|v| v.abs() <= 1e-8));
}

#[test]
fn zero_gradient_start_stops_on_tol_grad() {
    let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 16.0);
    let prior = inclusion(&mesh, 5.0);
    let tg = TimeGrid::from_cfl(&mesh, 0.8, 0.5).unwrap();
    let p = pulse();
    let obs = make_observations(&mesh, &prior, &p, &tg, 0.0, 0).unwrap();
    let cfg = ObjectiveConfig::new(0.0, 0.0, &prior, 0.25);
    let problem = InversionProblem { mesh: &mesh, pulse: &p, tg, obs: &obs, objective: &cfg, freeze_sigma: true };
    let mut c = cga_cfg(5.0, 10);
    c.eta1_eps = 1e-6;
    c.eta2_eps = 1e-6;
    let s = run_cga(&problem, prior.clone(), &c).unwrap();
    assert!(s.m <= 1);
    assert_eq!(s.stop_reason, StopReason::TolGrad);
    assert_eq!(s.coeffs, prior);
}

#[test]
fn fletcher_reeves_toy_trajectory() {
    // J(x) = (x - 3)^2 on one node of unit mass, fixed step 1/4, from x = 0:
    // g0 = -6, d0 = 6, x1 = 1.5; g1 = -3, beta1 = 1/4, d1 = 4.5, x2 = 2.625.
    let mass = [1.0];
    let grad = |x: f64| 2.0 * (x - 3.0);
    let mut x = 0.0;
    let (mut gp, mut dp): (Option<Vec<f64>>, Option<Vec<f64>>) = (None, None);
    let mut betas = Vec::new();
    let mut xs = vec![x];
    for _ in 0..2 {
        let g = vec![grad(x)];
        let (d, beta) = fletcher_reeves(&mass, &g, gp.as_deref(), dp.as_deref());
        x += 0.25 * d[0];
        betas.push(beta);
        xs.push(x);
        gp = Some(g);
        dp = Some(d);
    }
    assert_eq!(xs, vec![0.0, 1.5, 2.625]);
    assert_eq!(betas, vec![0.0, 0.25]);
}

#[test]
fn iterates_stay_in_bounds_with_oversized_steps() {
    let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 16.0);
    let truth = inclusion(&mesh, 9.0);
    let tg = TimeGrid::from_cfl(&mesh, 1.0, 0.5).unwrap();
    let p = pulse();
    let obs = make_observations(&mesh, &truth, &p, &tg, 0.0, 0).unwrap();
    let init = CoefficientField::background(truth.len(), 10.0, 2.0);
    let cfg = ObjectiveConfig::new(0.0, 0.0, &init, 0.25);
    let problem = InversionProblem { mesh: &mesh, pulse: &p, tg, obs: &obs, objective: &cfg, freeze_sigma: false };
    let c = CgaConfig { alpha_eps: 5e4, alpha_sigma: 5e4, freeze_sigma: false, ..cga_cfg(1.0, 4) };
    let mut s = ReconstructionState::new(&problem, init).unwrap();
    let mut touched = false;
    for _ in 0..4 {
        s = cga_iterate(s, &problem, &c).unwrap();
        assert!(s.coeffs.within_bounds());
        touched |= s.coeffs.eps.contains(&10.0) || s.coeffs.sigma.iter().any(|&v| v == 0.0 || v == 2.0);
        assert_eq!(s.j_history.len(), s.m + 1);
    }
    assert!(touched, "steps never reached a bound");
}

#[test]
fn max_refinements_zero_is_plain_cga() {
    let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 16.0);
    let truth = inclusion(&mesh, 6.0);
    let p = pulse();
    let tg = TimeGrid::from_cfl(&mesh, 1.0, 0.5).unwrap();
    let obs = make_observations(&mesh, &truth, &p, &tg, 0.05, 9).unwrap();
    let init = inclusion(&mesh, 3.0);
    let cfg = ObjectiveConfig::new(1e-3, 0.0, &init, 0.25);
    let c = cga_cfg(20.0, 3);
    let problem = InversionProblem { mesh: &mesh, pulse: &p, tg, obs: &obs, objective: &cfg, freeze_sigma: true };
    let plain = run_cga(&problem, init.clone(), &c).unwrap();
    let a = AcgaConfig {
        beta: 0.7,
        max_refinements: 0,
        theta1_eps: 1e-3,
        theta2_eps: 1e-3,
        theta1_sigma: 1e-3,
        theta2_sigma: 1e-3,
        angle_floor_deg: 20.0,
        common_time_grid: false,
    };
    let inputs = AcgaInputs { mesh: &mesh, obs: &obs, pulse: &p, t_end: 1.0, cfl_safety: 0.5, objective: &cfg, init: &init };
    let r = run_acga(&a, &c, &inputs).unwrap();
    assert_eq!(r.levels.len(), 1);
    assert_eq!(r.last().state.coeffs, plain.coeffs);
    assert_eq!(r.last().state.j_history, plain.j_history);
}

#[test]
fn gaussian_bump_marks_a_neighbourhood_of_its_centre() {
    let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 32.0);
    let fem = mesh.fem_mesh();
    let eps: Vec<f64> = fem.nodes().iter().map(|p| 1.0 + 8.0 * (-((p[0] - 0.55).powi(2) + (p[1] - 0.45).powi(2)) / 0.005).exp()).collect();
    let sigma = vec![0.0; eps.len()];
    let marked = mark_for_refinement(&eps, &sigma, fem, 0.7);
    assert_eq!(marked, scan_marked(&eps, &sigma, fem, 0.7));
    assert!(!marked.is_empty() && marked.len() < fem.element_count() / 4);
    for &k in &marked {
        let c = fem.element(k).iter().fold([0.0; 2], |acc, &n| [acc[0] + fem.node(n)[0] / 3.0, acc[1] + fem.node(n)[1] / 3.0]);
        assert!(((c[0] - 0.55).powi(2) + (c[1] - 0.45).powi(2)).sqrt() < 0.1);
    }
}

#[test]
fn noise_statistics() {
    let nodes: Vec<usize> = (0..100).collect();
    let coords = vec![[0.0; 3]; 100];
    let times: Vec<f64> = (0..=60).map(|n| n as f64 * 0.1).collect();
    let mut clean = BoundaryTrace::zeros(2, nodes, coords, times);
    for (k, v) in clean.values_mut().iter_mut().enumerate() {
        *v = 0.5 + (k as f64 * 0.37).sin();
    }
    let n = clean.values().len();
    assert!(n >= 10_000);

    let mut exact = clean.clone();
    add_noise(&mut exact, 0.0, 5).unwrap();
    assert_eq!(exact, clean);

    let delta = 0.1;
    let mut a = clean.clone();
    let mut b = clean.clone();
    add_noise(&mut a, delta, 77).unwrap();
    add_noise(&mut b, delta, 77).unwrap();
    assert_eq!(a, b);
    let rel: Vec<f64> = a.values().iter().zip(clean.values()).filter(|(_, c)| **c != 0.0).map(|(x, c)| ((x - c) / c).abs()).collect();
    assert!(rel.iter().all(|&r| r <= delta * (1.0 + 1e-12)));
    let mean = rel.iter().sum::<f64>() / rel.len() as f64;
    assert!((mean - delta / 2.0).abs() <= 0.05 * delta / 2.0, "mean {mean}");
    assert!(add_noise(&mut a, -0.1, 1).is_err());
}

fn field_strategy(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(1.0f64..10.0, n), prop::collection::vec(0.0f64..2.0, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn marking_is_scale_invariant((eps, sigma) in field_strategy(81), c in 0.01f64..100.0, beta in 0.05f64..0.95) {
        let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 16.0);
        let fem = mesh.fem_mesh();
        let a = mark_for_refinement(&eps, &sigma, fem, beta);
        let se: Vec<f64> = eps.iter().map(|v| v * c).collect();
        let ss: Vec<f64> = sigma.iter().map(|v| v * c).collect();
        prop_assert_eq!(a.clone(), mark_for_refinement(&se, &ss, fem, beta));
        prop_assert_eq!(a, scan_marked(&eps, &sigma, fem, beta));
    }

    #[test]
    fn marked_sets_shrink_as_beta_grows((eps, sigma) in field_strategy(81), b1 in 0.01f64..0.99, b2 in 0.01f64..0.99) {
        let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 16.0);
        let fem = mesh.fem_mesh();
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let big = mark_for_refinement(&eps, &sigma, fem, lo);
        let small = mark_for_refinement(&eps, &sigma, fem, hi);
        prop_assert!(small.is_subset(&big));
        prop_assert!(!small.is_empty());
    }

    #[test]
    fn marking_on_refined_meshes_matches_scan(
        (eps, sigma) in field_strategy(400),
        marks in prop::collection::vec(0usize..128, 1..10),
        beta in 0.05f64..0.95
    ) {
        let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 16.0);
        let r = refine_elements(mesh.fem_mesh(), &marks.into_iter().collect(), 20.0).unwrap();
        let n = r.node_count();
        prop_assume!(n <= 400);
        prop_assert_eq!(mark_for_refinement(&eps[..n], &sigma[..n], &r, beta), scan_marked(&eps[..n], &sigma[..n], &r, beta));
    }

    #[test]
    fn stop_test_is_the_compound_condition(
        inc in prop::array::uniform2(0.0f64..2.0),
        grad in prop::array::uniform2(0.0f64..2.0),
        freeze in any::<bool>()
    ) {
        let (e1, e2) = ([1.0, 1.0], [1.0, 1.0]);
        let got = stop_test(inc, grad, e1, e2, freeze).is_some();
        let expect = if freeze {
            inc[0] < 1.0 && grad[0] < 1.0
        } else {
            (inc[0] < 1.0 || inc[1] < 1.0) && (grad[0] < 1.0 || grad[1] < 1.0)
        };
        prop_assert_eq!(got, expect);
    }
}

#[test]
fn stop_test_truth_table_over_all_threshold_patterns() {
    for bits in 0u32..16 {
        let below = |b: u32| if bits & (1 << b) != 0 { 0.5 } else { 1.5 };
        let inc = [below(0), below(1)];
        let grad = [below(2), below(3)];
        let expect = (bits & 0b0011 != 0) && (bits & 0b1100 != 0);
        assert_eq!(stop_test(inc, grad, [1.0; 2], [1.0; 2], false).is_some(), expect, "pattern {bits:04b}");
    }
}

#[test]
fn reaching_max_iter_stops() {
    let mesh = square_mesh(1.0, 0.25, 0.75, 1.0 / 16.0);
    let truth = inclusion(&mesh, 6.0);
    let p = pulse();
    let tg = TimeGrid::from_cfl(&mesh, 1.0, 0.5).unwrap();
    let obs = make_observations(&mesh, &truth, &p, &tg, 0.0, 0).unwrap();
    let init = CoefficientField::background(truth.len(), 10.0, 2.0);
    let cfg = ObjectiveConfig::new(0.0, 0.0, &init, 0.25);
    let problem = InversionProblem { mesh: &mesh, pulse: &p, tg, obs: &obs, objective: &cfg, freeze_sigma: true };
    let s = run_cga(&problem, init, &cga_cfg(10.0, 2)).unwrap();
    assert_eq!(s.m, 2);
    assert_eq!(s.stop_reason, StopReason::MaxIter);
    assert_eq!(s.records.len(), 2);
}
