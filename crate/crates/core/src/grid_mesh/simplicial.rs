use std::collections::HashMap;

use super::{cross, dot, norm, sub, MeshError, Point};

/// Facet on the mesh boundary with its outward unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub nodes: Vec<usize>,
    pub normal: Point,
    pub element: usize,
}

/// Per-element scalar values, e.g. the local mesh size `h|_K = diam(K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshFunction(pub Vec<f64>);

impl MeshFunction {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Conforming triangle (2D) or tetrahedron (3D) mesh with positively
/// oriented elements.
#[derive(Debug, Clone)]
pub struct SimplicialMesh {
    dim: usize,
    nodes: Vec<Point>,
    elements: Vec<usize>,
    generation: Vec<u32>,
    boundary_faces: Vec<BoundaryFace>,
}

impl SimplicialMesh {
    /// `elements` is flat with stride `dim + 1`.
    pub fn new(
        dim: usize,
        nodes: Vec<Point>,
        elements: Vec<usize>,
        generation: Vec<u32>,
    ) -> Result<Self, MeshError> {
        if !(2..=3).contains(&dim) {
            return Err(MeshError::Dimension(dim));
        }
        let nv = dim + 1;
        assert_eq!(elements.len() % nv, 0, "element list length must be a multiple of {nv}");
        assert_eq!(generation.len(), elements.len() / nv);
        let mut mesh = Self {
            dim,
            nodes,
            elements,
            generation,
            boundary_faces: Vec::new(),
        };
        for k in 0..mesh.element_count() {
            if !(mesh.signed_volume(k) > 0.0) {
                return Err(MeshError::Orientation(k));
            }
        }
        mesh.boundary_faces = mesh.compute_boundary_faces();
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Point {
        &self.nodes[i]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len() / (self.dim + 1)
    }

    pub fn element(&self, k: usize) -> &[usize] {
        let nv = self.dim + 1;
        &self.elements[k * nv..(k + 1) * nv]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[usize]> {
        self.elements.chunks_exact(self.dim + 1)
    }

    pub fn generation(&self, k: usize) -> u32 {
        self.generation[k]
    }

    pub fn generations(&self) -> &[u32] {
        &self.generation
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn signed_volume(&self, k: usize) -> f64 {
        let e = self.element(k);
        let p0 = self.nodes[e[0]];
        let a = sub(&self.nodes[e[1]], &p0);
        let b = sub(&self.nodes[e[2]], &p0);
        if self.dim == 2 {
            0.5 * (a[0] * b[1] - a[1] * b[0])
        } else {
            let c = sub(&self.nodes[e[3]], &p0);
            dot(&a, &cross(&b, &c)) / 6.0
        }
    }

    pub fn volume(&self, k: usize) -> f64 {
        self.signed_volume(k).abs()
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.element_count()).map(|k| self.volume(k)).sum()
    }

    /// Local edge pairs of a simplex with `nv` vertices.
    pub(crate) fn local_edges(nv: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..nv).flat_map(move |i| (i + 1..nv).map(move |j| (i, j)))
    }

    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        norm(&sub(&self.nodes[hi], &self.nodes[lo]))
    }

    /// Element diameter (longest edge).
    pub fn diameter(&self, k: usize) -> f64 {
        let e = self.element(k);
        Self::local_edges(e.len())
            .map(|(i, j)| self.edge_length(e[i], e[j]))
            .fold(0.0, f64::max)
    }

    pub fn shortest_edge(&self) -> f64 {
        self.elements()
            .flat_map(|e| Self::local_edges(e.len()).map(move |(i, j)| (e[i], e[j])))
            .map(|(a, b)| self.edge_length(a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest planar angle over the element's triangular faces, in degrees.
    pub fn min_angle_deg(&self, k: usize) -> f64 {
        let e = self.element(k);
        let tri_min = |a: usize, b: usize, c: usize| {
            let pts = [self.nodes[a], self.nodes[b], self.nodes[c]];
            (0..3)
                .map(|i| {
                    let u = sub(&pts[(i + 1) % 3], &pts[i]);
                    let v = sub(&pts[(i + 2) % 3], &pts[i]);
                    (dot(&u, &v) / (norm(&u) * norm(&v))).clamp(-1.0, 1.0).acos()
                })
                .fold(f64::INFINITY, f64::min)
        };
        let rad = if self.dim == 2 {
            tri_min(e[0], e[1], e[2])
        } else {
            [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
                .iter()
                .map(|&(a, b, c)| tri_min(e[a], e[b], e[c]))
                .fold(f64::INFINITY, f64::min)
        };
        rad.to_degrees()
    }

    pub fn min_angle_overall_deg(&self) -> f64 {
        (0..self.element_count())
            .map(|k| self.min_angle_deg(k))
            .fold(f64::INFINITY, f64::min)
    }

    /// Element volume and gradients of the barycentric (P1 hat) functions.
    pub fn p1_gradients(&self, k: usize) -> (f64, [Point; 4]) {
        let e = self.element(k);
        let p0 = self.nodes[e[0]];
        let mut grads = [[0.0; 3]; 4];
        if self.dim == 2 {
            let a = sub(&self.nodes[e[1]], &p0);
            let b = sub(&self.nodes[e[2]], &p0);
            let det = a[0] * b[1] - a[1] * b[0];
            // rows of the inverse Jacobian [a b]^-1
            grads[1] = [b[1] / det, -b[0] / det, 0.0];
            grads[2] = [-a[1] / det, a[0] / det, 0.0];
        } else {
            let a = sub(&self.nodes[e[1]], &p0);
            let b = sub(&self.nodes[e[2]], &p0);
            let c = sub(&self.nodes[e[3]], &p0);
            let det = dot(&a, &cross(&b, &c));
            let bc = cross(&b, &c);
            let ca = cross(&c, &a);
            let ab = cross(&a, &b);
            for k in 0..3 {
                grads[1][k] = bc[k] / det;
                grads[2][k] = ca[k] / det;
                grads[3][k] = ab[k] / det;
            }
        }
        for k in 0..3 {
            grads[0][k] = -(1..=self.dim).map(|a| grads[a][k]).sum::<f64>();
        }
        (self.volume(k), grads)
    }

    /// Row-sum lumped P1 mass per node.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let nv = self.dim + 1;
        let mut m = vec![0.0; self.node_count()];
        for k in 0..self.element_count() {
            let share = self.volume(k) / nv as f64;
            for &n in self.element(k) {
                m[n] += share;
            }
        }
        m
    }

    /// `h(x)|_K = diam(K)` for every element.
    pub fn mesh_h(&self) -> MeshFunction {
        MeshFunction((0..self.element_count()).map(|k| self.diameter(k)).collect())
    }

    pub fn boundary_node_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.node_count()];
        for f in &self.boundary_faces {
            for &n in &f.nodes {
                mask[n] = true;
            }
        }
        mask
    }

    fn compute_boundary_faces(&self) -> Vec<BoundaryFace> {
        let nv = self.dim + 1;
        let mut count: HashMap<Vec<usize>, (usize, usize, usize)> = HashMap::new();
        for k in 0..self.element_count() {
            let e = self.element(k);
            for skip in 0..nv {
                let mut face: Vec<usize> = (0..nv).filter(|&i| i != skip).map(|i| e[i]).collect();
                face.sort_unstable();
                let entry = count.entry(face).or_insert((0, k, e[skip]));
                entry.0 += 1;
            }
        }
        let mut faces: Vec<BoundaryFace> = count
            .into_iter()
            .filter(|(_, (c, _, _))| *c == 1)
            .map(|(nodes, (_, element, opposite))| {
                let normal = self.face_normal(&nodes, opposite);
                BoundaryFace { nodes, normal, element }
            })
            .collect();
        faces.sort_by(|a, b| a.nodes.cmp(&b.nodes));
        faces
    }

    fn face_normal(&self, face: &[usize], opposite: usize) -> Point {
        let p0 = self.nodes[face[0]];
        let mut n = if self.dim == 2 {
            let t = sub(&self.nodes[face[1]], &p0);
            [t[1], -t[0], 0.0]
        } else {
            cross(&sub(&self.nodes[face[1]], &p0), &sub(&self.nodes[face[2]], &p0))
        };
        let inward = sub(&self.nodes[opposite], &p0);
        if dot(&n, &inward) > 0.0 {
            n = [-n[0], -n[1], -n[2]];
        }
        let l = norm(&n);
        [n[0] / l, n[1] / l, n[2] / l]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_triangle() -> SimplicialMesh {
        SimplicialMesh::new(
            2,
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![0, 1, 2],
            vec![0],
        )
        .unwrap()
    }

    #[test]
    fn unit_right_triangle_diameter_is_sqrt2() {
        let m = unit_triangle();
        assert!((m.mesh_h().values()[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!((m.min_angle_deg(0) - 45.0).abs() < 1e-12);
    }

    #[test]
    fn gradients_sum_to_zero_and_reproduce_linears() {
        let m = SimplicialMesh::new(
            3,
            vec![[0.0; 3], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 1.0, 1.0]],
            vec![0, 1, 2, 3],
            vec![0],
        )
        .unwrap();
        let (vol, g) = m.p1_gradients(0);
        assert!((vol - 1.0 / 6.0).abs() < 1e-15);
        // grad of f(x) = 2x - y + 3z is recovered from nodal values
        let f = |p: &Point| 2.0 * p[0] - p[1] + 3.0 * p[2];
        for k in 0..3 {
            let s: f64 = (0..4).map(|a| f(m.node(m.element(0)[a])) * g[a][k]).sum();
            let expect = [2.0, -1.0, 3.0][k];
            assert!((s - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn inverted_element_rejected() {
        let err = SimplicialMesh::new(
            2,
            vec![[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]],
            vec![0, 1, 2],
            vec![0],
        )
        .unwrap_err();
        assert_eq!(err, MeshError::Orientation(0));
    }

    #[test]
    fn boundary_normals_point_outward() {
        let m = unit_triangle();
        assert_eq!(m.boundary_faces().len(), 3);
        let centroid = [1.0 / 3.0, 1.0 / 3.0, 0.0];
        for f in m.boundary_faces() {
            let mid = sub(m.node(f.nodes[0]), &centroid);
            assert!(dot(&mid, &f.normal) > 0.0);
        }
    }
}
