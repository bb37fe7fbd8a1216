use serde::{Deserialize, Serialize};

use crate::media::{project_in_place, CoefficientField};

use super::objective::{l2_norm, Evaluation, GradientFields, InversionProblem};
use super::InversionError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgaConfig {
    pub alpha_eps: f64,
    pub alpha_sigma: f64,
    pub eta1_eps: f64,
    pub eta2_eps: f64,
    pub eta1_sigma: f64,
    pub eta2_sigma: f64,
    /// Maximum number of coefficient updates.
    pub max_iter: usize,
    /// Conductivity is known: `sigma` is never updated and its clauses drop
    /// out of the stopping test.
    #[serde(default)]
    pub freeze_sigma: bool,
    /// Halve the step (at most 10 times) while `J` increases.
    #[serde(default)]
    pub backtracking: bool,
}

impl CgaConfig {
    pub fn validate(&self) -> Result<(), InversionError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.alpha_eps) || !pos(self.alpha_sigma) {
            return Err(InversionError::Config("step sizes must be positive".into()));
        }
        if ![self.eta1_eps, self.eta2_eps, self.eta1_sigma, self.eta2_sigma].into_iter().all(pos) {
            return Err(InversionError::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TolCoeff,
    TolGrad,
    MaxIter,
    Running,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TolCoeff => "tol_coeff",
            Self::TolGrad => "tol_grad",
            Self::MaxIter => "max_iter",
            Self::Running => "running",
        })
    }
}

/// One coefficient update `m -> m + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub m: usize,
    pub j: f64,
    pub misfit: f64,
    pub norm_g_eps: f64,
    pub norm_g_sigma: f64,
    pub max_eps: f64,
    pub step_eps: f64,
    pub step_sigma: f64,
    pub beta_eps: f64,
    pub beta_sigma: f64,
}

/// Iterate of the conjugate gradient method.
#[derive(Debug, Clone)]
pub struct ReconstructionState {
    pub m: usize,
    pub coeffs: CoefficientField,
    pub g_prev: Option<GradientFields>,
    pub d_prev: Option<GradientFields>,
    /// `J` at iterates `0..=m`.
    pub j_history: Vec<f64>,
    pub stop_reason: StopReason,
    pub records: Vec<IterationRecord>,
    current: Option<Evaluation>,
}

impl ReconstructionState {
    /// Evaluates `J` and the gradients at the initial guess.
    pub fn new(problem: &InversionProblem<'_>, init: CoefficientField) -> Result<Self, InversionError> {
        let mut coeffs = init;
        project_in_place(&mut coeffs);
        let ev = problem.evaluate(&coeffs)?;
        Ok(Self {
            m: 0,
            coeffs,
            g_prev: None,
            d_prev: None,
            j_history: vec![ev.objective.j],
            stop_reason: StopReason::Running,
            records: Vec::new(),
            current: Some(ev),
        })
    }

    /// Evaluation at the current iterate.
    pub fn current(&self) -> Option<&Evaluation> {
        self.current.as_ref()
    }
}

/// Fletcher-Reeves direction `-g + beta d_prev`, `beta = |g|^2 / |g_prev|^2`;
/// a zero denominator restarts with `-g`.
pub fn fletcher_reeves(mass: &[f64], g: &[f64], g_prev: Option<&[f64]>, d_prev: Option<&[f64]>) -> (Vec<f64>, f64) {
    let beta = match (g_prev, d_prev) {
        (Some(gp), Some(_)) => {
            let den = l2_norm(mass, gp).powi(2);
            if den > 0.0 {
                l2_norm(mass, g).powi(2) / den
            } else {
                0.0
            }
        }
        _ => 0.0,
    };
    let d = match d_prev {
        Some(dp) if beta != 0.0 => g.iter().zip(dp).map(|(gi, di)| -gi + beta * di).collect(),
        _ => g.iter().map(|gi| -gi).collect(),
    };
    (d, beta)
}

/// The compound test `(|d eps| < eta1_eps or |d sigma| < eta1_sigma) and
/// (|g_eps| < eta2_eps or |g_sigma| < eta2_sigma)`, or only the `eps` parts
/// when `sigma` is frozen. When it holds, the reason is `TolGrad` if the
/// gradient clause is met with at least the same relative margin as the
/// increment clause, else `TolCoeff`.
pub fn stop_test(inc: [f64; 2], grad: [f64; 2], eta1: [f64; 2], eta2: [f64; 2], freeze_sigma: bool) -> Option<StopReason> {
    let k = if freeze_sigma { 1 } else { 2 };
    let coeff_ok = (0..k).any(|i| inc[i] < eta1[i]);
    let grad_ok = (0..k).any(|i| grad[i] < eta2[i]);
    if !(coeff_ok && grad_ok) {
        return None;
    }
    let margin = |v: &[f64; 2], t: &[f64; 2]| (0..k).map(|i| v[i] / t[i]).fold(f64::INFINITY, f64::min);
    if margin(&grad, &eta2) <= margin(&inc, &eta1) {
        Some(StopReason::TolGrad)
    } else {
        Some(StopReason::TolCoeff)
    }
}

/// Stop decision for the last update of `state`.
pub fn check_stop(state: &ReconstructionState, cfg: &CgaConfig) -> StopReason {
    if let Some(r) = state.records.last() {
        if let Some(reason) = stop_test(
            [r.step_eps, r.step_sigma],
            [r.norm_g_eps, r.norm_g_sigma],
            [cfg.eta1_eps, cfg.eta1_sigma],
            [cfg.eta2_eps, cfg.eta2_sigma],
            cfg.freeze_sigma,
        ) {
            return reason;
        }
    }
    if state.m >= cfg.max_iter {
        StopReason::MaxIter
    } else {
        StopReason::Running
    }
}

fn candidate(coeffs: &CoefficientField, d: &GradientFields, a_eps: f64, a_sig: f64, freeze_sigma: bool) -> CoefficientField {
    let mut next = coeffs.clone();
    next.eps.iter_mut().zip(&d.g_eps).for_each(|(e, di)| *e += a_eps * di);
    if !freeze_sigma {
        next.sigma.iter_mut().zip(&d.g_sigma).for_each(|(s, di)| *s += a_sig * di);
    }
    project_in_place(&mut next);
    next
}

/// One cycle: gradients at `eps^m` (already evaluated), Fletcher-Reeves
/// directions, update and projection, evaluation at `eps^{m+1}`.
pub fn cga_iterate(mut state: ReconstructionState, problem: &InversionProblem<'_>, cfg: &CgaConfig) -> Result<ReconstructionState, InversionError> {
    cfg.validate()?;
    let ev = match state.current.take() {
        Some(ev) => ev,
        None => problem.evaluate(&state.coeffs)?,
    };
    let mass = problem.mesh.fem_mesh().lumped_mass();
    let g = &ev.gradients;
    let (d_eps, beta_eps) = fletcher_reeves(
        &mass,
        &g.g_eps,
        state.g_prev.as_ref().map(|x| x.g_eps.as_slice()),
        state.d_prev.as_ref().map(|x| x.g_eps.as_slice()),
    );
    let (d_sig, beta_sigma) = if cfg.freeze_sigma {
        (vec![0.0; g.g_sigma.len()], 0.0)
    } else {
        fletcher_reeves(
            &mass,
            &g.g_sigma,
            state.g_prev.as_ref().map(|x| x.g_sigma.as_slice()),
            state.d_prev.as_ref().map(|x| x.g_sigma.as_slice()),
        )
    };
    let d = GradientFields { g_eps: d_eps, g_sigma: d_sig };

    let (mut a_eps, mut a_sig) = (cfg.alpha_eps, cfg.alpha_sigma);
    let mut next = candidate(&state.coeffs, &d, a_eps, a_sig, cfg.freeze_sigma);
    if cfg.backtracking {
        let mut halvings = 0;
        while halvings < 10 && problem.objective_at(&next)?.j > ev.objective.j {
            a_eps *= 0.5;
            a_sig *= 0.5;
            halvings += 1;
            next = candidate(&state.coeffs, &d, a_eps, a_sig, cfg.freeze_sigma);
        }
    }
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let record = IterationRecord {
        m: state.m,
        j: ev.objective.j,
        misfit: ev.objective.misfit,
        norm_g_eps: l2_norm(&mass, &g.g_eps),
        norm_g_sigma: l2_norm(&mass, &g.g_sigma),
        max_eps: state.coeffs.max_eps(),
        step_eps: l2_norm(&mass, &diff(&next.eps, &state.coeffs.eps)),
        step_sigma: l2_norm(&mass, &diff(&next.sigma, &state.coeffs.sigma)),
        beta_eps,
        beta_sigma,
    };
    let next_ev = problem.evaluate(&next)?;
    state.j_history.push(next_ev.objective.j);
    state.records.push(record);
    state.g_prev = Some(ev.gradients);
    state.d_prev = Some(d);
    state.coeffs = next;
    state.current = Some(next_ev);
    state.m += 1;
    state.stop_reason = check_stop(&state, cfg);
    Ok(state)
}

/// Iterates until [`check_stop`] reports something other than `Running`.
pub fn run_cga(problem: &InversionProblem<'_>, init: CoefficientField, cfg: &CgaConfig) -> Result<ReconstructionState, InversionError> {
    cfg.validate()?;
    let mut state = ReconstructionState::new(problem, init)?;
    if cfg.max_iter == 0 {
        state.stop_reason = StopReason::MaxIter;
        return Ok(state);
    }
    while state.stop_reason == StopReason::Running {
        state = cga_iterate(state, problem, cfg)?;
        if let Some(r) = state.records.last() {
            log::info!(
                "cga m={} J={:.6e} |g_eps|={:.3e} step={:.3e} max_eps={:.4}",
                r.m,
                r.j,
                r.norm_g_eps,
                r.step_eps,
                state.coeffs.max_eps()
            );
        }
    }
    Ok(state)
}
