use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::grid_mesh::HybridMesh;
use crate::media::CoefficientField;
use crate::wavesolver::{solve_forward, BoundaryTrace, SourcePulse, TimeGrid};

use super::InversionError;

/// Multiplies every sample by `1 + delta u`, `u` uniform on `[-1, 1]` from a
/// ChaCha8 stream seeded with `seed`.
pub fn add_noise(trace: &mut BoundaryTrace, delta: f64, seed: u64) -> Result<(), InversionError> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(InversionError::Config(format!("noise level {delta} must be >= 0")));
    }
    if delta == 0.0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Uniform::new_inclusive(-1.0, 1.0);
    for v in trace.values_mut() {
        *v *= 1.0 + delta * u.sample(&mut rng);
    }
    Ok(())
}

/// Synthetic data: boundary trace for the true coefficients with
/// multiplicative noise of level `delta`.
pub fn make_observations(
    mesh: &HybridMesh,
    true_coeffs: &CoefficientField,
    pulse: &SourcePulse,
    tg: &TimeGrid,
    delta: f64,
    seed: u64,
) -> Result<BoundaryTrace, InversionError> {
    let (_, mut trace) = solve_forward(mesh, true_coeffs, pulse, tg)?;
    add_noise(&mut trace, delta, seed)?;
    Ok(trace)
}

/// Synthetic data from a finer reference discretization of the same
/// geometry: solved on `reference`, restricted to the outer boundary nodes
/// of `mesh`, resampled onto `tg`, then perturbed as in [`make_observations`].
#[allow(clippy::too_many_arguments)]
pub fn make_reference_observations(
    reference: &HybridMesh,
    reference_coeffs: &CoefficientField,
    pulse: &SourcePulse,
    reference_tg: &TimeGrid,
    mesh: &HybridMesh,
    tg: &TimeGrid,
    delta: f64,
    seed: u64,
) -> Result<BoundaryTrace, InversionError> {
    let (_, fine) = solve_forward(reference, reference_coeffs, pulse, reference_tg)?;
    let grid = mesh.fdm_grid();
    let nodes = mesh.outer_boundary_nodes();
    let coords: Vec<_> = nodes.iter().map(|&g| grid.coord(g)).collect();
    let mut trace = fine.restrict(nodes, &coords, 1e-6 * reference.h_fdm())?.resample(tg);
    add_noise(&mut trace, delta, seed)?;
    Ok(trace)
}
