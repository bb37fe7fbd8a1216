//! Tikhonov functional, adjoint gradients, conjugate gradient iterations and
//! the adaptive refinement driver.

mod acga;
mod cga;
mod objective;
mod observations;

pub use acga::{mark_for_refinement, refinement_indicator, run_acga, AcgaConfig, AcgaInputs, AcgaLevel, AcgaResult, AcgaStop};
pub use cga::{
    cga_iterate, check_stop, fletcher_reeves, run_cga, stop_test, CgaConfig, IterationRecord, ReconstructionState,
    StopReason,
};
pub use objective::{
    assemble_gradients, l2_norm, masked_residual, tikhonov, time_weight_z, Evaluation, GradientFields,
    InversionProblem, Objective, ObjectiveConfig,
};
pub use observations::{add_noise, make_observations, make_reference_observations};

use thiserror::Error;

use crate::grid_mesh::MeshError;
use crate::wavesolver::SolverError;

#[derive(Debug, Error)]
pub enum InversionError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
}
