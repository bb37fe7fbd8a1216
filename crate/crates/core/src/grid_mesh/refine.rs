//! Local refinement by conforming longest-edge bisection.
//!
//! A marked element is bisected `dim` times (4 children in 2D, 8 in 3D) so
//! its children have half the parent diameter on the right-isosceles and
//! Kuhn meshes built by [`super::build_hybrid_mesh`]. Any element left with a
//! split edge is bisected at its own longest edge until no hanging node
//! remains. On right-isosceles triangles this keeps every child similar to
//! its parent, so the minimum angle never drops below 45 degrees.

use std::collections::{BTreeSet, HashMap};

use super::{MeshError, Point, SimplicialMesh};

pub const DEFAULT_ANGLE_FLOOR_DEG: f64 = 20.0;

/// Refines `marked` elements and closes the mesh conformingly. Fails if an
/// element ends up below `angle_floor_deg`.
pub fn refine_elements(
    mesh: &SimplicialMesh,
    marked: &BTreeSet<usize>,
    angle_floor_deg: f64,
) -> Result<SimplicialMesh, MeshError> {
    let count = mesh.element_count();
    if let Some(&bad) = marked.iter().find(|&&k| k >= count) {
        return Err(MeshError::BadElementIndex { index: bad, count });
    }
    if marked.is_empty() {
        return Ok(mesh.clone());
    }

    let mut work = Bisector::new(mesh);
    let passes = mesh.dim() as u8;
    let mut owed: Vec<u8> = vec![0; count];
    for &k in marked {
        owed[k] = passes;
    }

    let mut pending: Vec<usize> = marked.iter().copied().collect();
    let mut hanging: Vec<usize> = Vec::new();
    loop {
        if let Some(k) = pending.pop() {
            if owed[k] == 0 {
                continue;
            }
            let (child, split) = work.bisect(k);
            let o = owed[k] - 1;
            owed[k] = o;
            owed.push(o);
            if o > 0 {
                pending.push(k);
                pending.push(child);
            }
            hanging.extend(split);
            continue;
        }
        if let Some(k) = hanging.pop() {
            if !work.has_split_edge(k) {
                continue;
            }
            let (child, split) = work.bisect(k);
            owed.push(0);
            hanging.push(k);
            hanging.push(child);
            hanging.extend(split);
            continue;
        }
        break;
    }

    let refined = SimplicialMesh::new(mesh.dim(), work.nodes, work.elements, work.generation)?;
    for k in 0..refined.element_count() {
        let a = refined.min_angle_deg(k);
        if a < angle_floor_deg {
            return Err(MeshError::AngleFloor {
                element: k,
                angle_deg: a,
                floor_deg: angle_floor_deg,
            });
        }
    }
    Ok(refined)
}

struct Bisector {
    nv: usize,
    nodes: Vec<Point>,
    elements: Vec<usize>,
    generation: Vec<u32>,
    midpoints: HashMap<(usize, usize), usize>,
    incident: Vec<Vec<usize>>,
}

impl Bisector {
    fn new(mesh: &SimplicialMesh) -> Self {
        let mut incident = vec![Vec::new(); mesh.node_count()];
        for (k, e) in mesh.elements().enumerate() {
            for &n in e {
                incident[n].push(k);
            }
        }
        Self {
            nv: mesh.dim() + 1,
            nodes: mesh.nodes().to_vec(),
            elements: mesh.elements().flatten().copied().collect(),
            generation: mesh.generations().to_vec(),
            midpoints: HashMap::new(),
            incident,
        }
    }

    fn element(&self, k: usize) -> &[usize] {
        &self.elements[k * self.nv..(k + 1) * self.nv]
    }

    fn len2(&self, a: usize, b: usize) -> f64 {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (p, q) = (self.nodes[lo], self.nodes[hi]);
        (0..3).map(|k| (q[k] - p[k]).powi(2)).sum()
    }

    /// Longest edge of element `k`; near-ties go to the smaller vertex pair
    /// so neighbours agree on the choice.
    fn refinement_edge(&self, k: usize) -> (usize, usize) {
        let e = self.element(k);
        let edges: Vec<(usize, usize, f64)> = SimplicialMesh::local_edges(self.nv)
            .map(|(i, j)| {
                let (a, b) = (e[i].min(e[j]), e[i].max(e[j]));
                (a, b, self.len2(a, b))
            })
            .collect();
        let longest = edges.iter().map(|t| t.2).fold(0.0, f64::max);
        edges
            .iter()
            .filter(|t| t.2 >= longest * (1.0 - 1e-10))
            .map(|t| (t.0, t.1))
            .min()
            .expect("simplex has edges")
    }

    fn has_split_edge(&self, k: usize) -> bool {
        let e = self.element(k);
        SimplicialMesh::local_edges(self.nv).any(|(i, j)| {
            self.midpoints
                .contains_key(&(e[i].min(e[j]), e[i].max(e[j])))
        })
    }

    /// Bisects element `k` at its refinement edge. Child one keeps index
    /// `k`; the index of child two is returned with the elements that now
    /// see a hanging node on the split edge.
    fn bisect(&mut self, k: usize) -> (usize, Vec<usize>) {
        let (a, b) = self.refinement_edge(k);
        let (m, created) = match self.midpoints.get(&(a, b)) {
            Some(&m) => (m, false),
            None => {
                let (p, q) = (self.nodes[a], self.nodes[b]);
                self.nodes
                    .push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])]);
                self.incident.push(Vec::new());
                let m = self.nodes.len() - 1;
                self.midpoints.insert((a, b), m);
                (m, true)
            }
        };

        let verts: Vec<usize> = self.element(k).to_vec();
        let child = self.generation.len();
        let first: Vec<usize> = verts.iter().map(|&v| if v == b { m } else { v }).collect();
        let second: Vec<usize> = verts.iter().map(|&v| if v == a { m } else { v }).collect();
        self.elements[k * self.nv..(k + 1) * self.nv].copy_from_slice(&first);
        self.elements.extend_from_slice(&second);
        let g = self.generation[k] + 1;
        self.generation[k] = g;
        self.generation.push(g);

        self.incident[b].retain(|&e| e != k);
        self.incident[b].push(child);
        self.incident[m].push(k);
        self.incident[m].push(child);
        for &v in &verts {
            if v != a && v != b {
                self.incident[v].push(child);
            }
        }

        let neighbours = if created {
            self.incident[a]
                .iter()
                .copied()
                .filter(|e| self.incident[b].contains(e))
                .collect()
        } else {
            Vec::new()
        };
        (child, neighbours)
    }
}
