use super::{Point, SimplicialMesh};

/// Bucket grid over a simplicial mesh for point location.
pub struct PointLocator<'a> {
    mesh: &'a SimplicialMesh,
    lo: Point,
    cell: f64,
    dims: [usize; 3],
    buckets: Vec<Vec<usize>>,
    scale: f64,
}

/// Element containing a point and the barycentric weights there.
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub element: usize,
    pub weights: Vec<f64>,
    /// False when the point was outside the mesh and got clamped.
    pub inside: bool,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a SimplicialMesh) -> Self {
        let dim = mesh.dim();
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for k in 0..dim {
            lo[k] = mesh.nodes().iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
            hi[k] = mesh.nodes().iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
        }
        let scale = (0..dim).map(|k| hi[k] - lo[k]).fold(0.0, f64::max).max(1e-300);
        let per_axis = ((mesh.element_count() as f64).powf(1.0 / dim as f64).ceil() as usize).max(1);
        let cell = scale / per_axis as f64;
        let mut dims = [1usize; 3];
        for k in 0..dim {
            dims[k] = (((hi[k] - lo[k]) / cell).ceil() as usize).max(1);
        }
        let mut loc = Self {
            mesh,
            lo,
            cell,
            dims,
            buckets: vec![Vec::new(); dims.iter().product()],
            scale,
        };
        for (k, e) in mesh.elements().enumerate() {
            let mut a = [usize::MAX; 3];
            let mut b = [0usize; 3];
            for &n in e {
                let c = loc.bucket_coords(mesh.node(n));
                for j in 0..3 {
                    a[j] = a[j].min(c[j]);
                    b[j] = b[j].max(c[j]);
                }
            }
            for z in a[2]..=b[2] {
                for y in a[1]..=b[1] {
                    for x in a[0]..=b[0] {
                        let id = x + dims[0] * (y + dims[1] * z);
                        loc.buckets[id].push(k);
                    }
                }
            }
        }
        loc
    }

    fn bucket_coords(&self, p: &Point) -> [usize; 3] {
        let mut c = [0usize; 3];
        for k in 0..self.mesh.dim() {
            let s = ((p[k] - self.lo[k]) / self.cell).floor();
            c[k] = (s.max(0.0) as usize).min(self.dims[k] - 1);
        }
        c
    }

    pub fn barycentric(&self, k: usize, p: &Point) -> Vec<f64> {
        let (_, grads) = self.mesh.p1_gradients(k);
        let e = self.mesh.element(k);
        let p0 = self.mesh.node(e[0]);
        let mut w = vec![0.0; e.len()];
        for a in 1..e.len() {
            w[a] = (0..3).map(|j| grads[a][j] * (p[j] - p0[j])).sum();
        }
        w[0] = 1.0 - w[1..].iter().sum::<f64>();
        w
    }

    /// Source node coinciding with `p`, if any.
    pub fn coinciding_node(&self, p: &Point) -> Option<usize> {
        let tol = 1e-12 * self.scale;
        let id = self.bucket_id(p);
        self.buckets[id]
            .iter()
            .flat_map(|&k| self.mesh.element(k).iter().copied())
            .find(|&n| {
                let q = self.mesh.node(n);
                (0..3).all(|j| (q[j] - p[j]).abs() <= tol)
            })
    }

    fn bucket_id(&self, p: &Point) -> usize {
        let c = self.bucket_coords(p);
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    /// Element containing `p`; outside points are clamped to the element
    /// with the least negative barycentric weight.
    pub fn locate(&self, p: &Point) -> Location {
        let tol = 1e-12;
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        let mut consider = |k: usize| -> bool {
            let w = self.barycentric(k, p);
            let worst = w.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= -tol {
                best = Some((k, w, worst));
                return true;
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((k, w, worst));
            }
            false
        };
        let id = self.bucket_id(p);
        for &k in &self.buckets[id] {
            if consider(k) {
                let (element, weights, _) = best.unwrap();
                return Location { element, weights, inside: true };
            }
        }
        for k in 0..self.mesh.element_count() {
            if consider(k) {
                let (element, weights, _) = best.unwrap();
                return Location { element, weights, inside: true };
            }
        }
        let (element, w, _) = best.expect("mesh has elements");
        let mut weights: Vec<f64> = w.iter().map(|v| v.max(0.0)).collect();
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|v| *v /= s);
        Location { element, weights, inside: false }
    }
}

/// P1 interpolation of nodal `values` on `from` at the nodes of `to`.
/// Values at coinciding nodes are copied exactly.
pub fn transfer_field(values: &[f64], from: &SimplicialMesh, to: &SimplicialMesh) -> Vec<f64> {
    transfer_vector_field(values, 1, from, to)
}

/// Same as [`transfer_field`] for interleaved `ncomp`-component node data.
pub fn transfer_vector_field(
    values: &[f64],
    ncomp: usize,
    from: &SimplicialMesh,
    to: &SimplicialMesh,
) -> Vec<f64> {
    assert_eq!(values.len(), from.node_count() * ncomp);
    let loc = PointLocator::new(from);
    let mut out = vec![0.0; to.node_count() * ncomp];
    let mut clamped = 0usize;
    for (i, p) in to.nodes().iter().enumerate() {
        let dst = &mut out[i * ncomp..(i + 1) * ncomp];
        if let Some(n) = loc.coinciding_node(p) {
            dst.copy_from_slice(&values[n * ncomp..(n + 1) * ncomp]);
            continue;
        }
        let l = loc.locate(p);
        if !l.inside {
            clamped += 1;
        }
        for (a, &n) in from.element(l.element).iter().enumerate() {
            for c in 0..ncomp {
                dst[c] += l.weights[a] * values[n * ncomp + c];
            }
        }
    }
    if clamped > 0 {
        log::warn!("transfer_field: {clamped} target nodes outside the source mesh were clamped");
    }
    out
}
