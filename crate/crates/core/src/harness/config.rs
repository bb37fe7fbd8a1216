use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::inversion::{AcgaConfig, CgaConfig};
use crate::media::Shape;

use super::HarnessError;

/// Full description of one experiment. Relative paths are resolved against
/// the directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub time: TimeConfig,
    pub phantom: PhantomConfig,
    pub bounds: BoundsConfig,
    pub pulse: PulseConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub objective: ObjectiveSection,
    pub cga: CgaConfig,
    #[serde(default)]
    pub acga: Option<AcgaConfig>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub domain_min: Vec<f64>,
    pub domain_max: Vec<f64>,
    pub fem_min: Vec<f64>,
    pub fem_max: Vec<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    #[serde(default = "default_safety")]
    pub cfl_safety: f64,
}

fn default_safety() -> f64 {
    0.5
}

/// Voxel phantom, read from `file` or rasterized from `shapes` on a
/// `dims` x `spacing` grid anchored at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub dims: Vec<usize>,
    #[serde(default)]
    pub spacing: f64,
    #[serde(default)]
    pub shapes: Vec<Shape>,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "one_f")]
    pub weight: f64,
    /// CSV media table; the built-in breast table when absent.
    #[serde(default)]
    pub media_table: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub eps_max: f64,
    pub sigma_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum ProfileConfig {
    #[default]
    Zero,
    Bump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
        polarization: Vec<f64>,
    },
    Slab {
        axis: usize,
        center: f64,
        half_width: f64,
        amplitude: f64,
        polarization: Vec<f64>,
    },
}


#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    #[serde(default)]
    pub f0: ProfileConfig,
    #[serde(default)]
    pub f1: ProfileConfig,
}

/// Region of space without a media label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Box { min: Vec<f64>, max: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    pub fn contains(&self, p: &[f64; 3], dim: usize) -> bool {
        match self {
            Region::Box { min, max } => (0..dim).all(|k| p[k] >= min[k] && p[k] <= max[k]),
            Region::Ball { center, radius } => (0..dim).map(|k| (p[k] - center[k]).powi(2)).sum::<f64>() <= radius * radius,
        }
    }

    fn coords_ok(&self, dim: usize) -> bool {
        match self {
            Region::Box { min, max } => min.len() == dim && max.len() == dim,
            Region::Ball { center, radius } => center.len() == dim && *radius > 0.0,
        }
    }
}

/// Initial iterate, which is also the prior of the functional: `eps_suspected`
/// at FE nodes inside `suspected`, `eps_background` elsewhere. With
/// `sigma_known` the conductivity is taken from the phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default = "one_f")]
    pub eps_background: f64,
    #[serde(default = "one_f")]
    pub eps_suspected: f64,
    #[serde(default)]
    pub suspected: Vec<Region>,
    #[serde(default)]
    pub sigma_known: bool,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { eps_background: 1.0, eps_suspected: 1.0, suspected: Vec::new(), sigma_known: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    #[serde(default)]
    pub gamma_eps: f64,
    #[serde(default)]
    pub gamma_sigma: f64,
    #[serde(default = "default_z")]
    pub z_cutoff: f64,
}

fn default_z() -> f64 {
    0.25
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        Self { gamma_eps: 0.0, gamma_sigma: 0.0, z_cutoff: default_z() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    /// Synthetic data come from the same geometry with spacing
    /// `h / 2^reference_levels`, restricted to the configured grid.
    #[serde(default)]
    pub reference_levels: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    /// Write FE and grid VTK snapshots of `E` every this many steps.
    #[serde(default)]
    pub snapshot_every: Option<usize>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out(), snapshot_every: None }
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        toml::from_str(s).map_err(|e| config_err(e.to_string()))
    }

    /// Parses, resolves relative paths against the file's directory and
    /// validates.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.phantom.file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.phantom.media_table.as_mut() {
            fix(p);
        }
        fix(&mut self.output.dir);
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn dim(&self) -> usize {
        self.geometry.domain_min.len()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let g = &self.geometry;
        let d = self.dim();
        if !(2..=3).contains(&d) || [g.domain_max.len(), g.fem_min.len(), g.fem_max.len()].iter().any(|&l| l != d) {
            return Err(config_err("geometry boxes need 2 or 3 coordinates each, all of the same length"));
        }
        if !(g.h > 0.0 && g.h.is_finite()) {
            return Err(config_err(format!("h = {} must be positive", g.h)));
        }
        let t = &self.time;
        if !(t.t_end > 0.0 && t.t_end.is_finite()) {
            return Err(config_err(format!("t_end = {} must be positive", t.t_end)));
        }
        if !(t.cfl_safety > 0.0 && t.cfl_safety <= 1.0) {
            return Err(config_err(format!("cfl_safety = {} outside (0, 1]", t.cfl_safety)));
        }
        let p = &self.phantom;
        match &p.file {
            Some(f) if !f.is_file() => return Err(config_err(format!("phantom file {} not found", f.display()))),
            Some(_) => {}
            None => {
                if p.dims.len() != d || p.dims.contains(&0) || !(p.spacing > 0.0) {
                    return Err(config_err("synthesized phantom needs dims with one positive entry per axis and a positive spacing"));
                }
            }
        }
        if let Some(f) = &p.media_table {
            if !f.is_file() {
                return Err(config_err(format!("media table {} not found", f.display())));
            }
        }
        if p.stride == 0 {
            return Err(config_err("stride must be >= 1"));
        }
        if !(p.weight > 0.0 && p.weight.is_finite()) {
            return Err(config_err(format!("weight = {} must be positive", p.weight)));
        }
        let b = &self.bounds;
        if !(b.eps_max >= 1.0 && b.eps_max.is_finite() && b.sigma_max >= 0.0 && b.sigma_max.is_finite()) {
            return Err(config_err("bounds need eps_max >= 1 and sigma_max >= 0"));
        }
        for prof in [&self.pulse.f0, &self.pulse.f1] {
            if let ProfileConfig::Bump { center, radius, polarization, amplitude } = prof {
                if center.len() != d || polarization.len() != d || !(*radius > 0.0) || !amplitude.is_finite() {
                    return Err(config_err("bump profiles need center and polarization of the problem dimension and radius > 0"));
                }
            }
            if let ProfileConfig::Slab { axis, half_width, polarization, amplitude, .. } = prof {
                if *axis >= d || polarization.len() != d || !(*half_width > 0.0) || !amplitude.is_finite() {
                    return Err(config_err("slab profiles need axis < dimension, polarization of the problem dimension and half_width > 0"));
                }
            }
        }
        let i = &self.initial;
        if !(1.0..=b.eps_max).contains(&i.eps_background) || !(1.0..=b.eps_max).contains(&i.eps_suspected) {
            return Err(config_err("initial permittivities must lie in [1, eps_max]"));
        }
        if !i.suspected.iter().all(|r| r.coords_ok(d)) {
            return Err(config_err("suspected regions need coordinates of the problem dimension"));
        }
        let o = &self.objective;
        if !(o.gamma_eps >= 0.0 && o.gamma_sigma >= 0.0) || !(o.z_cutoff > 0.0 && o.z_cutoff < 1.0) {
            return Err(config_err("objective needs gamma >= 0 and z_cutoff in (0, 1)"));
        }
        self.cga.validate().map_err(|e| config_err(e.to_string()))?;
        if let Some(a) = &self.acga {
            a.validate().map_err(|e| config_err(e.to_string()))?;
        }
        if !(self.noise.delta >= 0.0 && self.noise.delta.is_finite()) {
            return Err(config_err(format!("noise delta = {} must be >= 0", self.noise.delta)));
        }
        Ok(())
    }
}
