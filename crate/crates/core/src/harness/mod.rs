//! Configuration, experiment assembly and the command implementations
//! behind the `hybrid-inv` binary.

mod commands;
mod config;

pub use commands::{cmd_forward, cmd_invert, cmd_make_obs, cmd_phantom, read_observations, InvertSummary, LevelSummary};
pub use config::{
    BoundsConfig, GeometryConfig, InitialConfig, NoiseConfig, ObjectiveSection, OutputConfig, PhantomConfig,
    ProfileConfig, PulseConfig, Region, RunConfig, TimeConfig,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::grid_mesh::{build_hybrid_mesh, AxisBox, HybridMesh, MeshError, Point};
use crate::inversion::{make_observations, make_reference_observations, InversionError, ObjectiveConfig};
use crate::media::{map_media, sample_to_mesh, synthesize_phantom, CoefficientField, MediaError, MediaTable, VoxelPhantom};
use crate::wavesolver::{BoundaryTrace, PulseProfile, SolverError, SourcePulse, TimeGrid};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Inversion(#[from] InversionError),
}

impl HarnessError {
    /// 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } | Self::Media(_) | Self::Mesh(_) => 2,
            Self::Solver(SolverError::Format(_) | SolverError::Mismatch(_) | SolverError::Shape(_)) => 2,
            Self::Inversion(InversionError::Config(_) | InversionError::Mismatch(_)) => 2,
            Self::Inversion(InversionError::Solver(SolverError::Format(_) | SolverError::Mismatch(_))) => 2,
            Self::Solver(_) | Self::Inversion(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

fn point(v: &[f64]) -> Point {
    let mut p = [0.0; 3];
    p[..v.len().min(3)].copy_from_slice(&v[..v.len().min(3)]);
    p
}

fn profile(c: &ProfileConfig) -> PulseProfile {
    match c {
        ProfileConfig::Zero => PulseProfile::Zero,
        ProfileConfig::Bump { center, radius, amplitude, polarization } => PulseProfile::Bump {
            center: point(center),
            radius: *radius,
            amplitude: *amplitude,
            polarization: point(polarization),
        },
        ProfileConfig::Slab { axis, center, half_width, amplitude, polarization } => PulseProfile::Slab {
            axis: *axis,
            center: *center,
            half_width: *half_width,
            amplitude: *amplitude,
            polarization: point(polarization),
        },
    }
}

pub fn build_pulse(cfg: &RunConfig) -> SourcePulse {
    SourcePulse { f0: profile(&cfg.pulse.f0), f1: profile(&cfg.pulse.f1), forcing: None }
}

pub fn build_mesh(cfg: &RunConfig) -> Result<HybridMesh, HarnessError> {
    let g = &cfg.geometry;
    let domain = AxisBox::new(&g.domain_min, &g.domain_max)?;
    let fem = AxisBox::new(&g.fem_min, &g.fem_max)?;
    Ok(build_hybrid_mesh(&domain, &fem, g.h)?)
}

pub fn build_phantom(cfg: &RunConfig) -> Result<VoxelPhantom, HarnessError> {
    let p = &cfg.phantom;
    match &p.file {
        Some(path) => {
            let f = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
            Ok(VoxelPhantom::read(std::io::BufReader::new(f))?)
        }
        None => {
            let mut dims = [1usize; 3];
            dims[..p.dims.len()].copy_from_slice(&p.dims);
            Ok(synthesize_phantom(cfg.dim(), dims, p.spacing, &p.shapes)?)
        }
    }
}

pub fn build_table(cfg: &RunConfig) -> Result<MediaTable, HarnessError> {
    match &cfg.phantom.media_table {
        Some(path) => {
            let f = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
            Ok(MediaTable::from_csv(f)?)
        }
        None => Ok(MediaTable::default_breast()),
    }
}

/// Everything derived from a [`RunConfig`] before any solve.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub mesh: HybridMesh,
    pub phantom: VoxelPhantom,
    pub table: MediaTable,
    /// Phantom coefficients at the FE nodes.
    pub truth: CoefficientField,
    pub pulse: SourcePulse,
    pub tg: TimeGrid,
    /// Initial iterate and prior.
    pub init: CoefficientField,
    pub objective: ObjectiveConfig,
}

impl Experiment {
    pub fn build(cfg: &RunConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let mesh = build_mesh(cfg)?;
        let phantom = build_phantom(cfg)?;
        if phantom.dim() != cfg.dim() {
            return Err(HarnessError::Config(format!("phantom is {}D, geometry is {}D", phantom.dim(), cfg.dim())));
        }
        let table = build_table(cfg)?;
        let truth = phantom_coefficients(cfg, &phantom, &table, &mesh)?;
        let pulse = build_pulse(cfg);
        let tg = TimeGrid::from_cfl(&mesh, cfg.time.t_end, cfg.time.cfl_safety)?;
        let init = initial_guess(cfg, &mesh, &truth);
        let o = &cfg.objective;
        let objective = ObjectiveConfig::new(o.gamma_eps, o.gamma_sigma, &init, o.z_cutoff);
        Ok(Self { config: cfg.clone(), mesh, phantom, table, truth, pulse, tg, init, objective })
    }

    /// Noisy synthetic observations on this experiment's boundary and time
    /// grid, computed on the reference discretization.
    pub fn synthetic_observations(&self, seed: u64) -> Result<BoundaryTrace, HarnessError> {
        let n = &self.config.noise;
        if n.reference_levels == 0 {
            return Ok(make_observations(&self.mesh, &self.truth, &self.pulse, &self.tg, n.delta, seed)?);
        }
        let mut fine = self.config.clone();
        fine.geometry.h /= 2f64.powi(n.reference_levels as i32);
        let mesh = build_mesh(&fine)?;
        let truth = phantom_coefficients(&fine, &self.phantom, &self.table, &mesh)?;
        let tg = TimeGrid::from_cfl(&mesh, fine.time.t_end, fine.time.cfl_safety)?;
        Ok(make_reference_observations(&mesh, &truth, &self.pulse, &tg, &self.mesh, &self.tg, n.delta, seed)?)
    }

    /// Phantom coefficients on another mesh of the same geometry.
    pub fn truth_on(&self, mesh: &HybridMesh) -> Result<CoefficientField, HarnessError> {
        phantom_coefficients(&self.config, &self.phantom, &self.table, mesh)
    }
}

fn phantom_coefficients(
    cfg: &RunConfig,
    phantom: &VoxelPhantom,
    table: &MediaTable,
    mesh: &HybridMesh,
) -> Result<CoefficientField, HarnessError> {
    let voxels = map_media(phantom, table, cfg.phantom.weight)?;
    let mut field = sample_to_mesh(&voxels, mesh, cfg.phantom.stride, cfg.bounds.eps_max, cfg.bounds.sigma_max)?.field;
    for (i, &f) in mesh.frozen_mask().iter().enumerate() {
        if f {
            field.eps[i] = 1.0;
            field.sigma[i] = 0.0;
        }
    }
    Ok(field)
}

/// `eps_suspected` inside the suspected regions, `eps_background` elsewhere,
/// 1 on frozen nodes; conductivity from `truth` when known, else zero.
pub fn initial_guess(cfg: &RunConfig, mesh: &HybridMesh, truth: &CoefficientField) -> CoefficientField {
    let ic = &cfg.initial;
    let d = cfg.dim();
    let frozen = mesh.frozen_mask();
    let eps = mesh
        .fem_mesh()
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if frozen[i] {
                1.0
            } else if ic.suspected.iter().any(|r| r.contains(p, d)) {
                ic.eps_suspected
            } else {
                ic.eps_background
            }
        })
        .collect();
    let sigma = if ic.sigma_known { truth.sigma.clone() } else { vec![0.0; truth.len()] };
    CoefficientField { eps, sigma, eps_max: cfg.bounds.eps_max, sigma_max: cfg.bounds.sigma_max }
}
