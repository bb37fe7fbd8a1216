//! Reconstruction of relative permittivity and conductivity from boundary
//! observations of a time-dependent electric field.
//!
//! The forward model is the gauge-stabilized vector wave equation
//!
//! ```text
//! eps * E_tt + sigma * E_t - Lap(E) - grad div((eps - 1) E) = 0
//! ```
//!
//! with a first-order absorbing condition on the outer boundary. It is solved
//! on a hybrid discretization: a structured finite-difference grid covers the
//! whole domain, and a simplicial P1 finite-element mesh covers an inner box
//! where the coefficients may vary. The two exchange nodal values over a
//! two-node-layer overlap every time step.
//!
//! The inverse problem minimizes a Tikhonov functional with a
//! Fletcher-Reeves conjugate-gradient method. Gradients come from the exact
//! discrete adjoint of the time stepper. An adaptive driver refines the
//! finite-element mesh where `|h eps| + |h sigma|` is large.

pub mod grid_mesh;
pub mod harness;
pub mod inversion;
pub mod media;
pub mod vtk;
pub mod wavesolver;

pub use grid_mesh::{AxisBox, HybridMesh, MeshError, SimplicialMesh, StructuredGrid};
pub use media::{CoefficientField, MediaError, MediaTable, VoxelPhantom};
pub use wavesolver::{BoundaryTrace, FieldHistory, SolverError, SourcePulse, TimeGrid};
