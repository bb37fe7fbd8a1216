#![allow(dead_code)]

pub mod checks;

use hybrid_inversion::grid_mesh::{build_hybrid_mesh, AxisBox, HybridMesh, Point};
use rand::Rng;

pub fn square_mesh(side: f64, box_lo: f64, box_hi: f64, h: f64) -> HybridMesh {
    build_hybrid_mesh(
        &AxisBox::new(&[0.0, 0.0], &[side, side]).unwrap(),
        &AxisBox::new(&[box_lo, box_lo], &[box_hi, box_hi]).unwrap(),
        h,
    )
    .unwrap()
}

/// Random trigonometric field on the FE box, vanishing on its surface, with
/// values in `[0, 1]`.
pub struct SmoothField {
    lo: [f64; 2],
    hi: [f64; 2],
    modes: Vec<(f64, f64, f64, f64)>,
}

impl SmoothField {
    pub fn random<R: Rng>(rng: &mut R, mesh: &HybridMesh) -> Self {
        let b = mesh.fem_box();
        let modes = (0..4)
            .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0), rng.gen_range(0.0..6.3)))
            .collect();
        Self { lo: [b.min[0], b.min[1]], hi: [b.max[0], b.max[1]], modes }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        let s: Vec<f64> = (0..2).map(|k| ((p[k] - self.lo[k]) / (self.hi[k] - self.lo[k])).clamp(0.0, 1.0)).collect();
        let env = (std::f64::consts::PI * s[0]).sin().powi(2) * (std::f64::consts::PI * s[1]).sin().powi(2);
        let total: f64 = self.modes.iter().map(|m| m.0).sum();
        let osc: f64 = self
            .modes
            .iter()
            .map(|&(a, kx, ky, ph)| a * (0.5 + 0.5 * (kx * s[0] * 3.0 + ky * s[1] * 3.0 + ph).cos()))
            .sum::<f64>()
            / total;
        env * osc
    }

    pub fn sample(&self, mesh: &HybridMesh) -> Vec<f64> {
        mesh.fem_mesh().nodes().iter().map(|p| self.eval(p)).collect()
    }
}

/// Reference breast tissue values, written out independently of the crate:
/// `(media number, eps_r, sigma, eps_r / 5, sigma / 5)`.
pub const TISSUE_ROWS: [(f64, f64, f64, f64, f64); 10] = [
    (-1.0, 5.0, 0.0, 1.0, 0.0),
    (-2.0, 5.0, 0.0, 1.0, 0.0),
    (-4.0, 5.0, 0.0, 1.0, 0.0),
    (1.1, 45.0, 6.0, 9.0, 1.2),
    (1.2, 40.0, 5.0, 8.0, 1.0),
    (1.3, 40.0, 5.0, 8.0, 1.0),
    (2.0, 5.0, 0.0, 1.0, 0.0),
    (3.1, 5.0, 0.0, 1.0, 0.0),
    (3.2, 5.0, 0.0, 1.0, 0.0),
    (3.3, 5.0, 0.0, 1.0, 0.0),
];

/// Checks every tissue row through `map_media` at weights 1 and 5.
pub fn tissue_table_roundtrip() -> Result<(), String> {
    use hybrid_inversion::media::{map_media, MediaNumber};
    use hybrid_inversion::{MediaTable, VoxelPhantom};
    let media: Vec<MediaNumber> = TISSUE_ROWS.iter().map(|r| MediaNumber::from_f64(r.0).unwrap()).collect();
    let phantom = VoxelPhantom::new(2, [10, 1, 1], 0.1, media).map_err(|e| e.to_string())?;
    let table = MediaTable::default_breast();
    if table.len() != 10 {
        return Err(format!("table has {} rows", table.len()));
    }
    for (w, pick) in [(1.0, 0usize), (5.0, 1)] {
        let v = map_media(&phantom, &table, w).map_err(|e| e.to_string())?;
        for (i, row) in TISSUE_ROWS.iter().enumerate() {
            let (e, s) = if pick == 0 { (row.1, row.2) } else { (row.3, row.4) };
            if v.eps[i] != e || v.sigma[i] != s {
                return Err(format!("media {} weight {w}: ({}, {}) vs ({e}, {s})", row.0, v.eps[i], v.sigma[i]));
            }
        }
    }
    Ok(())
}

/// Voxel-by-voxel oracle for strided sampling: scans every coarse block for
/// the one containing `p` and returns the media of its first voxel.
pub fn coarse_block_lookup(phantom: &hybrid_inversion::VoxelPhantom, stride: usize, p: &Point) -> Option<usize> {
    let [nx, ny, _] = phantom.dims();
    let s = phantom.spacing() * stride as f64;
    let (cx, cy) = (nx.div_ceil(stride), ny.div_ceil(stride));
    for j in 0..cy {
        for i in 0..cx {
            let (x0, y0) = (i as f64 * s, j as f64 * s);
            let x1 = if i + 1 == cx { nx as f64 * phantom.spacing() } else { x0 + s };
            let y1 = if j + 1 == cy { ny as f64 * phantom.spacing() } else { y0 + s };
            if p[0] >= x0 && p[0] < x1 + if i + 1 == cx { 1e-12 } else { 0.0 } && p[1] >= y0 && p[1] < y1 + if j + 1 == cy { 1e-12 } else { 0.0 } {
                return Some(i * stride + nx * j * stride);
            }
        }
    }
    None
}
