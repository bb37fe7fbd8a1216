//! Hybrid domain decomposition: the structured FD grid covering the whole
//! domain, the simplicial FE mesh of the inner box, the node correspondence
//! between them, local refinement and field transfer.

mod hybrid;
mod refine;
mod simplicial;
mod structured;
mod transfer;

pub use hybrid::{build_hybrid_mesh, HybridMesh, OverlapMap};
pub use refine::{refine_elements, DEFAULT_ANGLE_FLOOR_DEG};
pub use simplicial::{BoundaryFace, MeshFunction, SimplicialMesh};
pub use structured::{NodeClass, StructuredGrid};
pub use transfer::{transfer_field, transfer_vector_field, PointLocator};

use thiserror::Error;

/// Spatial point; the z entry is zero in 2D.
pub type Point = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("unsupported dimension {0}, expected 2 or 3")]
    Dimension(usize),
    #[error("{what} ({value}) is not an integer multiple of h = {h}")]
    NonIntegral { what: String, value: f64, h: f64 },
    #[error("fem box must lie inside the domain with margin >= {required} on every side, axis {axis} has {margin}")]
    Margin { axis: usize, margin: f64, required: f64 },
    #[error("fem box must be at least 2h wide, axis {axis} has {width}")]
    FemBoxTooSmall { axis: usize, width: f64 },
    #[error("element {0} has non-positive signed volume")]
    Orientation(usize),
    #[error("element index {index} out of range ({count} elements)")]
    BadElementIndex { index: usize, count: usize },
    #[error("element {element} has minimum angle {angle_deg:.3} deg below the floor {floor_deg} deg")]
    AngleFloor { element: usize, angle_deg: f64, floor_deg: f64 },
    #[error("invalid spacing h = {0}")]
    Spacing(f64),
}

/// Axis-aligned box in 2D or 3D.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AxisBox {
    pub dim: usize,
    pub min: Point,
    pub max: Point,
}

impl AxisBox {
    pub fn new(min: &[f64], max: &[f64]) -> Result<Self, MeshError> {
        let dim = min.len();
        if !(2..=3).contains(&dim) || max.len() != dim {
            return Err(MeshError::Dimension(dim));
        }
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        lo[..dim].copy_from_slice(min);
        hi[..dim].copy_from_slice(max);
        Ok(Self { dim, min: lo, max: hi })
    }

    pub fn unit(dim: usize) -> Self {
        let mut max = [0.0; 3];
        max[..dim].iter_mut().for_each(|v| *v = 1.0);
        Self { dim, min: [0.0; 3], max }
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|k| self.side(k)).product()
    }

    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        (0..self.dim).all(|k| p[k] >= self.min[k] - tol && p[k] <= self.max[k] + tol)
    }

    /// True when `p` lies on the box surface (within `tol`).
    pub fn on_boundary(&self, p: &Point, tol: f64) -> bool {
        self.contains(p, tol)
            && (0..self.dim)
                .any(|k| (p[k] - self.min[k]).abs() <= tol || (p[k] - self.max[k]).abs() <= tol)
    }

    /// Max-norm distance from an inside point to the box surface.
    pub fn depth(&self, p: &Point) -> f64 {
        (0..self.dim)
            .map(|k| (p[k] - self.min[k]).min(self.max[k] - p[k]))
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
