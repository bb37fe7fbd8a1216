//! Explicit leapfrog solution of the forward wave problem and its exact
//! discrete adjoint on the hybrid FD/FE mesh.

mod history;
mod operator;
mod pulse;
mod solve;

pub use history::{BoundaryTrace, FieldHistory};
pub use operator::{HybridOperator, HybridState};
pub use pulse::{Forcing, PulseProfile, SourcePulse};
pub use solve::{
    adjoint_recurrence, discrete_energy, leapfrog_with_sources, solve_adjoint, solve_adjoint_with, solve_forward,
    solve_forward_full, solve_pure_fd, ForwardSolution, SolverOptions,
};

use thiserror::Error;

use crate::grid_mesh::HybridMesh;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("time step {dt} exceeds the CFL limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },
    #[error("solution diverged at step {step}: max |E| = {value:e} > {limit:e}")]
    Diverged { step: usize, value: f64, limit: f64 },
    #[error("invalid time grid: {0}")]
    TimeGrid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("grid mismatch: {0}")]
    Mismatch(String),
    #[error("trace format: {0}")]
    Format(String),
}

/// Stable time step `safety * h_min / sqrt(d)` for unit wave speed.
pub fn cfl_dt(mesh: &HybridMesh, safety: f64) -> f64 {
    safety * mesh.h_min() / (mesh.dim() as f64).sqrt()
}

/// Uniform time levels `t_n = n dt`, `n = 0..=steps`, with `dt * steps = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_end: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    /// Smallest step count whose step does not exceed `dt_max`.
    pub fn new(t_end: f64, dt_max: f64) -> Result<Self, SolverError> {
        if !(t_end > 0.0 && t_end.is_finite() && dt_max > 0.0 && dt_max.is_finite()) {
            return Err(SolverError::TimeGrid(format!("T = {t_end}, dt = {dt_max}")));
        }
        let steps = ((t_end / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok(Self::with_steps(t_end, steps))
    }

    pub fn with_steps(t_end: f64, steps: usize) -> Self {
        Self { t_end, dt: t_end / steps as f64, steps }
    }

    /// Time grid obeying the CFL bound of `mesh` with the given safety factor.
    pub fn from_cfl(mesh: &HybridMesh, t_end: f64, safety: f64) -> Result<Self, SolverError> {
        if !(safety > 0.0 && safety <= 1.0) {
            return Err(SolverError::TimeGrid(format!("CFL safety {safety} outside (0, 1]")));
        }
        Self::new(t_end, cfl_dt(mesh, safety))
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| self.time(n)).collect()
    }

    /// Trapezoidal quadrature weight of level `n`.
    pub fn trapezoid_weight(&self, n: usize) -> f64 {
        if n == 0 || n == self.steps {
            0.5 * self.dt
        } else {
            self.dt
        }
    }
}
