use super::{MeshError, Point};

/// Role of a structured-grid node in the hybrid scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeClass {
    /// On the outer boundary; carries the absorbing condition.
    OuterBoundary,
    /// Inside the FE box one layer in from its surface; the value is copied
    /// from the FE solution every step.
    Interface,
    /// Updated by the FD stencil, including nodes on the FE box surface.
    Interior,
    /// Deeper inside the FE box; not touched by the FD stencil.
    CoveredByFem,
}

/// Uniform Cartesian node grid. Node `(i, j, k)` has linear index
/// `i + nx * (j + ny * k)`.
///
/// The FD operator is written in finite-volume form on the dual cells, which
/// gives the usual 5/7-point Laplacian in the interior and a symmetric
/// natural treatment at the outer boundary.
#[derive(Debug, Clone)]
pub struct StructuredGrid {
    dim: usize,
    origin: Point,
    extents: [usize; 3],
    spacing: f64,
    classes: Vec<NodeClass>,
}

impl StructuredGrid {
    /// Grid with every node classified as outer boundary or interior.
    pub fn new(dim: usize, origin: Point, extents: [usize; 3], spacing: f64) -> Result<Self, MeshError> {
        if !(2..=3).contains(&dim) {
            return Err(MeshError::Dimension(dim));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(MeshError::Spacing(spacing));
        }
        let mut ext = [1usize; 3];
        ext[..dim].copy_from_slice(&extents[..dim]);
        let mut grid = Self {
            dim,
            origin,
            extents: ext,
            spacing,
            classes: Vec::new(),
        };
        grid.classes = (0..grid.node_count())
            .map(|n| {
                if grid.is_outer(grid.ijk(n)) {
                    NodeClass::OuterBoundary
                } else {
                    NodeClass::Interior
                }
            })
            .collect();
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    pub fn class(&self, n: usize) -> NodeClass {
        self.classes[n]
    }

    pub(crate) fn set_class(&mut self, n: usize, c: NodeClass) {
        self.classes[n] = c;
    }

    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.extents[0] * (ijk[1] + self.extents[1] * ijk[2])
    }

    pub fn ijk(&self, n: usize) -> [usize; 3] {
        let i = n % self.extents[0];
        let r = n / self.extents[0];
        [i, r % self.extents[1], r / self.extents[1]]
    }

    pub fn coord(&self, n: usize) -> Point {
        let ijk = self.ijk(n);
        let mut p = [0.0; 3];
        for k in 0..self.dim {
            p[k] = self.origin[k] + ijk[k] as f64 * self.spacing;
        }
        p
    }

    fn is_outer(&self, ijk: [usize; 3]) -> bool {
        (0..self.dim).any(|k| ijk[k] == 0 || ijk[k] + 1 == self.extents[k])
    }

    fn at_end(&self, ijk: [usize; 3], axis: usize) -> bool {
        ijk[axis] == 0 || ijk[axis] + 1 == self.extents[axis]
    }

    /// Dual-cell fraction along `axis`: 1/2 at the ends, 1 elsewhere.
    fn frac(&self, ijk: [usize; 3], axis: usize) -> f64 {
        if self.at_end(ijk, axis) {
            0.5
        } else {
            1.0
        }
    }

    /// Volume of the dual cell around node `n`.
    pub fn dual_volume(&self, n: usize) -> f64 {
        let ijk = self.ijk(n);
        (0..self.dim)
            .map(|k| self.spacing * self.frac(ijk, k))
            .product()
    }

    /// Measure of the outer-boundary patch attached to node `n` (zero for
    /// nodes off the outer boundary). Sums to the surface measure of the box.
    pub fn boundary_measure(&self, n: usize) -> f64 {
        let ijk = self.ijk(n);
        (0..self.dim)
            .filter(|&k| self.at_end(ijk, k))
            .map(|k| {
                (0..self.dim)
                    .filter(|&j| j != k)
                    .map(|j| self.spacing * self.frac(ijk, j))
                    .product::<f64>()
            })
            .sum()
    }

    /// Axis neighbours of `n` with the finite-volume edge weight
    /// `h^(d-2) * (dual face fraction)`.
    pub fn neighbors(&self, n: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let ijk = self.ijk(n);
        let dim = self.dim;
        (0..dim).flat_map(move |axis| {
            let mut face = self.spacing.powi(dim as i32 - 2);
            for j in 0..dim {
                if j != axis {
                    face *= self.frac(ijk, j);
                }
            }
            let lower = (ijk[axis] > 0).then(|| {
                let mut m = ijk;
                m[axis] -= 1;
                (self.index(m), face)
            });
            let upper = (ijk[axis] + 1 < self.extents[axis]).then(|| {
                let mut m = ijk;
                m[axis] += 1;
                (self.index(m), face)
            });
            lower.into_iter().chain(upper)
        })
    }

    /// Grid index of a node lying at `p` (within `tol` times the spacing).
    pub fn node_at(&self, p: &Point, tol: f64) -> Option<usize> {
        let mut ijk = [0usize; 3];
        for k in 0..self.dim {
            let s = (p[k] - self.origin[k]) / self.spacing;
            let r = s.round();
            if (s - r).abs() > tol || r < 0.0 || r as usize >= self.extents[k] {
                return None;
            }
            ijk[k] = r as usize;
        }
        Some(self.index(ijk))
    }

    /// Multilinear interpolation weights of the grid at `p`. Points outside
    /// the grid are clamped onto it.
    pub fn interpolation_stencil(&self, p: &Point) -> Vec<(usize, f64)> {
        let mut base = [0usize; 3];
        let mut t = [0.0; 3];
        for k in 0..self.dim {
            let n = self.extents[k];
            let s = ((p[k] - self.origin[k]) / self.spacing).clamp(0.0, (n - 1) as f64);
            let mut i = s.floor() as usize;
            if i + 1 >= n {
                i = n.saturating_sub(2);
            }
            base[k] = i;
            t[k] = s - i as f64;
        }
        let mut out = Vec::with_capacity(1 << self.dim);
        for corner in 0..(1usize << self.dim) {
            let mut ijk = base;
            let mut w = 1.0;
            for k in 0..self.dim {
                if corner >> k & 1 == 1 {
                    ijk[k] += 1;
                    w *= t[k];
                } else {
                    w *= 1.0 - t[k];
                }
            }
            if w.abs() > 1e-14 {
                out.push((self.index(ijk), w));
            }
        }
        out
    }

    /// Outer boundary node indices in ascending order.
    pub fn outer_boundary_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&n| self.classes[n] == NodeClass::OuterBoundary)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(n: usize) -> StructuredGrid {
        StructuredGrid::new(2, [0.0; 3], [n, n, 1], 1.0 / (n - 1) as f64).unwrap()
    }

    #[test]
    fn dual_volumes_and_boundary_measure_sum_to_box() {
        let g = grid2(6);
        let vol: f64 = (0..g.node_count()).map(|n| g.dual_volume(n)).sum();
        let perim: f64 = (0..g.node_count()).map(|n| g.boundary_measure(n)).sum();
        assert!((vol - 1.0).abs() < 1e-14);
        assert!((perim - 4.0).abs() < 1e-14);

        let g3 = StructuredGrid::new(3, [0.0; 3], [4, 5, 3], 0.5).unwrap();
        let vol: f64 = (0..g3.node_count()).map(|n| g3.dual_volume(n)).sum();
        let area: f64 = (0..g3.node_count()).map(|n| g3.boundary_measure(n)).sum();
        let (a, b, c) = (1.5, 2.0, 1.0);
        assert!((vol - a * b * c).abs() < 1e-13);
        assert!((area - 2.0 * (a * b + b * c + a * c)).abs() < 1e-13);
    }

    #[test]
    fn interior_stencil_is_five_point() {
        let g = grid2(5);
        let n = g.index([2, 2, 0]);
        let nb: Vec<_> = g.neighbors(n).collect();
        assert_eq!(nb.len(), 4);
        assert!(nb.iter().all(|&(_, w)| w == 1.0));
        let corner: Vec<_> = g.neighbors(0).collect();
        assert_eq!(corner.len(), 2);
        assert!(corner.iter().all(|&(_, w)| w == 0.5));
    }

    #[test]
    fn classification_partitions_nodes() {
        let g = grid2(5);
        assert_eq!(g.outer_boundary_nodes().len(), 16);
        assert_eq!(
            g.classes().iter().filter(|c| **c == NodeClass::Interior).count(),
            9
        );
    }

    #[test]
    fn stencil_reproduces_linear_functions() {
        let g = StructuredGrid::new(3, [0.0; 3], [4, 4, 4], 0.25).unwrap();
        let p = [0.3, 0.61, 0.05];
        let st = g.interpolation_stencil(&p);
        let wsum: f64 = st.iter().map(|s| s.1).sum();
        let x: f64 = st.iter().map(|&(n, w)| w * g.coord(n)[0]).sum();
        let y: f64 = st.iter().map(|&(n, w)| w * g.coord(n)[1]).sum();
        assert!((wsum - 1.0).abs() < 1e-14);
        assert!((x - 0.3).abs() < 1e-14 && (y - 0.61).abs() < 1e-14);
        assert_eq!(g.node_at(&[0.5, 0.25, 0.75], 1e-9), Some(g.index([2, 1, 3])));
        assert_eq!(g.node_at(&[0.51, 0.25, 0.75], 1e-9), None);
    }
}
