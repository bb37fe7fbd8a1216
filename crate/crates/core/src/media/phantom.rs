use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{MediaError, MediaNumber};

/// Voxel grid of media numbers. Voxel `(i, j, k)` spans
/// `[i s, (i+1) s) x [j s, (j+1) s) x ...` and has linear index
/// `i + nx * (j + ny * k)`.
///
/// Text format: `dims nx ny [nz]`, then `spacing s`, then the media numbers
/// whitespace separated with x varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelPhantom {
    dim: usize,
    dims: [usize; 3],
    spacing: f64,
    media: Vec<MediaNumber>,
}

impl VoxelPhantom {
    pub fn new(dim: usize, dims: [usize; 3], spacing: f64, media: Vec<MediaNumber>) -> Result<Self, MediaError> {
        if !(2..=3).contains(&dim) {
            return Err(MediaError::Format(format!("dimension {dim}")));
        }
        let mut d = [1usize; 3];
        d[..dim].copy_from_slice(&dims[..dim]);
        if d.contains(&0) {
            return Err(MediaError::Format("zero voxel count".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(MediaError::Format(format!("spacing {spacing}")));
        }
        let n: usize = d.iter().product();
        if media.len() != n {
            return Err(MediaError::Format(format!("expected {n} media numbers, found {}", media.len())));
        }
        Ok(Self { dim, dims: d, spacing, media })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn media(&self) -> &[MediaNumber] {
        &self.media
    }

    pub fn voxel_center(&self, v: usize) -> [f64; 3] {
        let i = v % self.dims[0];
        let j = (v / self.dims[0]) % self.dims[1];
        let k = v / (self.dims[0] * self.dims[1]);
        let mut c = [0.0; 3];
        for (a, idx) in [i, j, k].into_iter().enumerate().take(self.dim) {
            c[a] = (idx as f64 + 0.5) * self.spacing;
        }
        c
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, MediaError> {
        let mut lines = reader.lines();
        let mut next_line = || -> Result<String, MediaError> {
            lines
                .next()
                .ok_or_else(|| MediaError::Format("unexpected end of file".into()))?
                .map_err(MediaError::from)
        };
        let header = next_line()?;
        let mut it = header.split_whitespace();
        if it.next() != Some("dims") {
            return Err(MediaError::Format("first line must start with `dims`".into()));
        }
        let dims_v: Vec<usize> = it
            .map(|t| t.parse().map_err(|_| MediaError::Format(format!("bad dim {t:?}"))))
            .collect::<Result<_, _>>()?;
        let dim = dims_v.len();
        if !(2..=3).contains(&dim) {
            return Err(MediaError::Format(format!("expected 2 or 3 dims, got {dim}")));
        }
        let sp = next_line()?;
        let mut it = sp.split_whitespace();
        if it.next() != Some("spacing") {
            return Err(MediaError::Format("second line must start with `spacing`".into()));
        }
        let spacing: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| MediaError::Format("bad spacing".into()))?;
        let mut media = Vec::new();
        for line in lines {
            for tok in line?.split_whitespace() {
                media.push(tok.parse()?);
            }
        }
        let mut dims = [1usize; 3];
        dims[..dim].copy_from_slice(&dims_v);
        Self::new(dim, dims, spacing, media)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), MediaError> {
        let dims: Vec<String> = self.dims[..self.dim].iter().map(|d| d.to_string()).collect();
        writeln!(w, "dims {}", dims.join(" "))?;
        writeln!(w, "spacing {}", self.spacing)?;
        let mut line = String::new();
        for row in self.media.chunks(self.dims[0]) {
            line.clear();
            for (i, m) in row.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{m}");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Primitive for building synthetic phantoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Box { min: Vec<f64>, max: Vec<f64>, media: f64 },
    Ball { center: Vec<f64>, radius: f64, media: f64 },
}

impl Shape {
    /// Membership of `p` using the first `dim` coordinates.
    pub fn contains(&self, p: &[f64; 3], dim: usize) -> bool {
        match self {
            Shape::Box { min, max, .. } => (0..dim).all(|k| p[k] >= min[k] && p[k] <= max[k]),
            Shape::Ball { center, radius, .. } => {
                (0..dim).map(|k| (p[k] - center[k]).powi(2)).sum::<f64>() <= radius * radius
            }
        }
    }

    fn media(&self) -> f64 {
        match self {
            Shape::Box { media, .. } | Shape::Ball { media, .. } => *media,
        }
    }
}

/// Rasterizes `shapes` by voxel centres over a background of media `-1`;
/// later shapes overwrite earlier ones.
pub fn synthesize_phantom(dim: usize, dims: [usize; 3], spacing: f64, shapes: &[Shape]) -> Result<VoxelPhantom, MediaError> {
    let mut d = [1usize; 3];
    d[..dim.min(3)].copy_from_slice(&dims[..dim.min(3)]);
    let n: usize = d.iter().product();
    let background = MediaNumber::from_tenths(-10);
    let mut phantom = VoxelPhantom::new(dim, d, spacing, vec![background; n])?;
    for shape in shapes {
        let media = MediaNumber::from_f64(shape.media())?;
        let coord_len = match shape {
            Shape::Box { min, max, .. } => min.len().min(max.len()),
            Shape::Ball { center, .. } => center.len(),
        };
        if coord_len < dim {
            return Err(MediaError::Format(format!("shape coordinates need {dim} entries")));
        }
        for v in 0..n {
            if shape.contains(&phantom.voxel_center(v), dim) {
                phantom.media[v] = media;
            }
        }
    }
    Ok(phantom)
}
