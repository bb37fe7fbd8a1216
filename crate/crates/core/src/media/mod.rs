//! Coefficient model: tissue table, voxel phantoms, sampling onto the FE
//! nodes and projection onto the admissible box `1 <= eps <= eps_max`,
//! `0 <= sigma <= sigma_max`.
//!
//! Conductivities are stored already rescaled to the dimensionless units of
//! the wave equation; nothing here converts back to physical units.

mod phantom;
mod table;

pub use phantom::{synthesize_phantom, Shape, VoxelPhantom};
pub use table::{MediaNumber, MediaRow, MediaTable};

use thiserror::Error;

use crate::grid_mesh::{HybridMesh, Point};

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("voxel {voxel}: media number {media} is not in the media table")]
    UnknownMedia { voxel: usize, media: MediaNumber },
    #[error("duplicate media number {0} in table")]
    DuplicateMedia(MediaNumber),
    #[error("media {media}: {reason}")]
    InvalidRow { media: MediaNumber, reason: String },
    #[error("cannot parse media number {0:?}")]
    BadMediaNumber(String),
    #[error("phantom format: {0}")]
    Format(String),
    #[error("weight must be positive, got {0}")]
    Weight(f64),
    #[error("stride must be positive")]
    Stride,
    #[error("invalid bounds eps_max = {eps_max}, sigma_max = {sigma_max}")]
    Bounds { eps_max: f64, sigma_max: f64 },
    #[error("coefficient arrays have {eps} and {sigma} entries")]
    Shape { eps: usize, sigma: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-voxel permittivity and conductivity.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelField {
    pub dim: usize,
    pub dims: [usize; 3],
    pub spacing: f64,
    pub eps: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Maps every voxel through the table and divides by `weight`; permittivity
/// is clamped below at 1.
pub fn map_media(phantom: &VoxelPhantom, table: &MediaTable, weight: f64) -> Result<VoxelField, MediaError> {
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(MediaError::Weight(weight));
    }
    let n = phantom.media().len();
    let mut eps = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for (voxel, &media) in phantom.media().iter().enumerate() {
        let row = table
            .lookup(media)
            .ok_or(MediaError::UnknownMedia { voxel, media })?;
        eps.push((row.eps / weight).max(1.0));
        sigma.push(row.sigma / weight);
    }
    Ok(VoxelField {
        dim: phantom.dim(),
        dims: phantom.dims(),
        spacing: phantom.spacing(),
        eps,
        sigma,
    })
}

/// Fine-voxel index whose value survives `stride` subsampling at point `p`,
/// or `None` outside the phantom. Voxel boxes start at the origin.
pub fn coarse_voxel_at(dim: usize, dims: [usize; 3], spacing: f64, stride: usize, p: &Point) -> Option<usize> {
    let coarse = spacing * stride as f64;
    let mut ijk = [0usize; 3];
    for k in 0..dim {
        let extent = dims[k] as f64 * spacing;
        let tol = 1e-9 * spacing;
        if p[k] < -tol || p[k] > extent + tol {
            return None;
        }
        let n_coarse = dims[k].div_ceil(stride);
        let c = ((p[k] / coarse).floor().max(0.0) as usize).min(n_coarse - 1);
        ijk[k] = c * stride;
    }
    Some(ijk[0] + dims[0] * (ijk[1] + dims[1] * ijk[2]))
}

/// Permittivity and conductivity at the FE nodes with their upper bounds.
/// Outside the FE box the solvers assume `eps = 1`, `sigma = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub eps: Vec<f64>,
    pub sigma: Vec<f64>,
    pub eps_max: f64,
    pub sigma_max: f64,
}

impl CoefficientField {
    pub fn new(eps: Vec<f64>, sigma: Vec<f64>, eps_max: f64, sigma_max: f64) -> Result<Self, MediaError> {
        if eps.len() != sigma.len() {
            return Err(MediaError::Shape { eps: eps.len(), sigma: sigma.len() });
        }
        if !(eps_max >= 1.0 && sigma_max >= 0.0 && eps_max.is_finite() && sigma_max.is_finite()) {
            return Err(MediaError::Bounds { eps_max, sigma_max });
        }
        Ok(Self { eps, sigma, eps_max, sigma_max })
    }

    /// Background medium `eps = 1`, `sigma = 0` at `n` nodes.
    pub fn background(n: usize, eps_max: f64, sigma_max: f64) -> Self {
        Self {
            eps: vec![1.0; n],
            sigma: vec![0.0; n],
            eps_max,
            sigma_max,
        }
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn within_bounds(&self) -> bool {
        self.eps.iter().all(|&e| (1.0..=self.eps_max).contains(&e))
            && self.sigma.iter().all(|&s| (0.0..=self.sigma_max).contains(&s))
    }

    pub fn max_eps(&self) -> f64 {
        self.eps.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Clamps `eps` into `[1, eps_max]` and `sigma` into `[0, sigma_max]`.
pub fn project_bounds(field: &CoefficientField) -> CoefficientField {
    let mut out = field.clone();
    project_in_place(&mut out);
    out
}

pub(crate) fn project_in_place(field: &mut CoefficientField) {
    let (emax, smax) = (field.eps_max, field.sigma_max);
    field.eps.iter_mut().for_each(|e| *e = e.clamp(1.0, emax));
    field.sigma.iter_mut().for_each(|s| *s = s.clamp(0.0, smax));
}

/// Result of [`sample_to_mesh`]: the field plus the number of FE nodes that
/// fell outside the phantom and got the background value.
#[derive(Debug, Clone)]
pub struct SampledField {
    pub field: CoefficientField,
    pub outside: usize,
}

/// Nearest-voxel sampling of a voxel field at the FE nodes after keeping
/// every `stride`-th voxel per axis, followed by bound projection.
pub fn sample_to_mesh(
    voxels: &VoxelField,
    mesh: &HybridMesh,
    stride: usize,
    eps_max: f64,
    sigma_max: f64,
) -> Result<SampledField, MediaError> {
    if stride == 0 {
        return Err(MediaError::Stride);
    }
    let n = mesh.fem_mesh().node_count();
    let mut field = CoefficientField::new(vec![1.0; n], vec![0.0; n], eps_max, sigma_max)?;
    let mut outside = 0;
    for (i, p) in mesh.fem_mesh().nodes().iter().enumerate() {
        match coarse_voxel_at(voxels.dim, voxels.dims, voxels.spacing, stride, p) {
            Some(v) => {
                field.eps[i] = voxels.eps[v];
                field.sigma[i] = voxels.sigma[v];
            }
            None => outside += 1,
        }
    }
    if outside > 0 {
        log::warn!("sample_to_mesh: {outside} FE nodes outside the phantom set to background");
    }
    project_in_place(&mut field);
    Ok(SampledField { field, outside })
}

/// Media number of the surviving coarse voxel at each FE node (`None`
/// outside the phantom).
pub fn sample_media(phantom: &VoxelPhantom, mesh: &HybridMesh, stride: usize) -> Vec<Option<MediaNumber>> {
    mesh.fem_mesh()
        .nodes()
        .iter()
        .map(|p| {
            coarse_voxel_at(phantom.dim(), phantom.dims(), phantom.spacing(), stride.max(1), p)
                .map(|v| phantom.media()[v])
        })
        .collect()
}
