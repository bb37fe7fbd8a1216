use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::grid_mesh::{refine_elements, transfer_field, HybridMesh, SimplicialMesh, DEFAULT_ANGLE_FLOOR_DEG};
use crate::media::CoefficientField;
use crate::wavesolver::{cfl_dt, BoundaryTrace, SolverError, SourcePulse, TimeGrid};

use super::cga::{run_cga, stop_test, CgaConfig, ReconstructionState};
use super::objective::{l2_norm, InversionProblem, ObjectiveConfig};
use super::InversionError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcgaConfig {
    pub beta: f64,
    pub max_refinements: usize,
    pub theta1_eps: f64,
    pub theta2_eps: f64,
    pub theta1_sigma: f64,
    pub theta2_sigma: f64,
    #[serde(default = "default_floor")]
    pub angle_floor_deg: f64,
    /// Run every level on one time grid, stable for meshes whose shortest
    /// edge is `2^(-max_refinements/2)` times that of the initial mesh,
    /// instead of a CFL grid per level.
    #[serde(default)]
    pub common_time_grid: bool,
}

fn default_floor() -> f64 {
    DEFAULT_ANGLE_FLOOR_DEG
}

impl AcgaConfig {
    pub fn validate(&self) -> Result<(), InversionError> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(InversionError::Config(format!("beta {} outside (0, 1)", self.beta)));
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if ![self.theta1_eps, self.theta2_eps, self.theta1_sigma, self.theta2_sigma].into_iter().all(pos) {
            return Err(InversionError::Config("theta tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// `diam(K) (|mean eps| + |mean sigma|)` per element.
pub fn refinement_indicator(eps: &[f64], sigma: &[f64], mesh: &SimplicialMesh) -> Vec<f64> {
    (0..mesh.element_count())
        .map(|k| {
            let e = mesh.element(k);
            let n = e.len() as f64;
            let eb = e.iter().map(|&i| eps[i]).sum::<f64>() / n;
            let sb = e.iter().map(|&i| sigma[i]).sum::<f64>() / n;
            let h = mesh.diameter(k);
            (h * eb).abs() + (h * sb).abs()
        })
        .collect()
}

/// Elements whose indicator reaches `beta` times its maximum.
pub fn mark_for_refinement(eps: &[f64], sigma: &[f64], mesh: &SimplicialMesh, beta: f64) -> BTreeSet<usize> {
    let ind = refinement_indicator(eps, sigma, mesh);
    let max = ind.iter().copied().fold(0.0, f64::max);
    ind.iter()
        .enumerate()
        .filter(|&(_, &v)| v >= beta * max)
        .map(|(k, _)| k)
        .collect()
}

/// Reconstruction on one mesh of the adaptive sequence.
#[derive(Debug, Clone)]
pub struct AcgaLevel {
    pub level: usize,
    pub mesh: HybridMesh,
    pub tg: TimeGrid,
    pub state: ReconstructionState,
    /// Elements marked on this level for the next one.
    pub marked: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AcgaStop {
    Tolerance,
    MaxRefinements,
    RefinementFailed(String),
}

#[derive(Debug, Clone)]
pub struct AcgaResult {
    pub levels: Vec<AcgaLevel>,
    pub stop: AcgaStop,
}

impl AcgaResult {
    pub fn last(&self) -> &AcgaLevel {
        self.levels.last().expect("at least one level")
    }
}

/// Inputs shared by every level.
#[derive(Debug, Clone, Copy)]
pub struct AcgaInputs<'a> {
    pub mesh: &'a HybridMesh,
    /// Observations on the outer boundary; resampled in time per level.
    pub obs: &'a BoundaryTrace,
    pub pulse: &'a SourcePulse,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub objective: &'a ObjectiveConfig,
    pub init: &'a CoefficientField,
}

fn transfer_coeffs(c: &CoefficientField, from: &SimplicialMesh, to: &SimplicialMesh) -> CoefficientField {
    CoefficientField {
        eps: transfer_field(&c.eps, from, to),
        sigma: transfer_field(&c.sigma, from, to),
        eps_max: c.eps_max,
        sigma_max: c.sigma_max,
    }
}

fn solve_level(
    level: usize,
    mesh: HybridMesh,
    inputs: &AcgaInputs<'_>,
    objective: &ObjectiveConfig,
    init: CoefficientField,
    cga: &CgaConfig,
    common: Option<TimeGrid>,
) -> Result<AcgaLevel, InversionError> {
    let tg = match common {
        Some(tg) => {
            let limit = cfl_dt(&mesh, 1.0);
            if tg.dt > limit * (1.0 + 1e-12) {
                return Err(SolverError::Cfl { dt: tg.dt, limit }.into());
            }
            tg
        }
        None => TimeGrid::from_cfl(&mesh, inputs.t_end, inputs.cfl_safety)?,
    };
    let obs = if inputs.obs.times().len() == tg.steps + 1 {
        inputs.obs.clone()
    } else {
        inputs.obs.resample(&tg)
    };
    let problem = InversionProblem {
        mesh: &mesh,
        pulse: inputs.pulse,
        tg,
        obs: &obs,
        objective,
        freeze_sigma: cga.freeze_sigma,
    };
    let state = run_cga(&problem, init, cga)?;
    log::info!(
        "acga level {level}: {} FE nodes, {} iterations, J = {:.6e}, max eps = {:.4}",
        mesh.fem_mesh().node_count(),
        state.m,
        state.j_history.last().copied().unwrap_or(f64::NAN),
        state.coeffs.max_eps()
    );
    Ok(AcgaLevel { level, mesh, tg, state, marked: BTreeSet::new() })
}

/// Adaptive loop: CGA on the current mesh, mark, refine, transfer the
/// coefficients and priors, repeat until the `theta` test holds or
/// `max_refinements` refinements have been made.
pub fn run_acga(cfg: &AcgaConfig, cga: &CgaConfig, inputs: &AcgaInputs<'_>) -> Result<AcgaResult, InversionError> {
    cfg.validate()?;
    cga.validate()?;
    let mut objective = inputs.objective.clone();
    let common = if cfg.common_time_grid {
        let shrink = 0.5f64.powf(cfg.max_refinements as f64 / 2.0);
        Some(TimeGrid::new(inputs.t_end, cfl_dt(inputs.mesh, inputs.cfl_safety) * shrink)?)
    } else {
        None
    };
    let mut levels = vec![solve_level(0, inputs.mesh.clone(), inputs, &objective, inputs.init.clone(), cga, common)?];
    loop {
        let i = levels.len() - 1;
        if i >= cfg.max_refinements {
            return Ok(AcgaResult { levels, stop: AcgaStop::MaxRefinements });
        }
        let cur = &levels[i];
        let fem = cur.mesh.fem_mesh();
        let marked = mark_for_refinement(&cur.state.coeffs.eps, &cur.state.coeffs.sigma, fem, cfg.beta);
        let refined = match refine_elements(fem, &marked, cfg.angle_floor_deg) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("refinement failed on level {i}: {e}");
                return Ok(AcgaResult { levels, stop: AcgaStop::RefinementFailed(e.to_string()) });
            }
        };
        levels[i].marked = marked;
        let cur = &levels[i];
        let fem = cur.mesh.fem_mesh();
        let mesh = cur.mesh.with_fem_mesh(refined);
        let to = mesh.fem_mesh();
        let init = transfer_coeffs(&cur.state.coeffs, fem, to);
        objective.eps_prior = transfer_field(&objective.eps_prior, fem, to);
        objective.sigma_prior = transfer_field(&objective.sigma_prior, fem, to);
        let next = solve_level(i + 1, mesh, inputs, &objective, init.clone(), cga, common)?;

        let mass = next.mesh.fem_mesh().lumped_mass();
        let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
        let inc = [
            l2_norm(&mass, &diff(&next.state.coeffs.eps, &init.eps)),
            l2_norm(&mass, &diff(&next.state.coeffs.sigma, &init.sigma)),
        ];
        let grad = match next.state.current() {
            Some(ev) => [l2_norm(&mass, &ev.gradients.g_eps), l2_norm(&mass, &ev.gradients.g_sigma)],
            None => [f64::INFINITY; 2],
        };
        levels.push(next);
        if stop_test(
            inc,
            grad,
            [cfg.theta1_eps, cfg.theta1_sigma],
            [cfg.theta2_eps, cfg.theta2_sigma],
            cga.freeze_sigma,
        )
        .is_some()
        {
            return Ok(AcgaResult { levels, stop: AcgaStop::Tolerance });
        }
    }
}
