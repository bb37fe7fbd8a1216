use std::collections::HashMap;

use super::{AxisBox, MeshError, NodeClass, Point, SimplicialMesh, StructuredGrid};

/// Correspondence between FE and FD nodes in the overlap.
///
/// The overlap is two node layers wide: the FE box surface, whose FE values
/// come from the FD solution, and the layer one step inside it, whose FD
/// values come from the FE solution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OverlapMap {
    /// `(fem node, fd node)` for FE boundary nodes that coincide with a grid node.
    pub fem_to_fd: Vec<(usize, usize)>,
    /// FE boundary nodes created by refinement, with their multilinear
    /// interpolation stencil on the FD grid.
    pub boundary_stencils: Vec<(usize, Vec<(usize, f64)>)>,
    /// `(fd interface node, fem node)`.
    pub fd_to_fem: Vec<(usize, usize)>,
}

/// `Omega = Omega_FDM ∪ Omega_FEM` with the node maps between the two parts.
#[derive(Debug, Clone)]
pub struct HybridMesh {
    dim: usize,
    domain_box: AxisBox,
    fem_box: AxisBox,
    fdm_grid: StructuredGrid,
    fem_mesh: SimplicialMesh,
    overlap: OverlapMap,
    outer_boundary_nodes: Vec<usize>,
    fem_boundary: Vec<bool>,
    frozen: Vec<bool>,
}

fn integral_steps(what: &str, value: f64, h: f64) -> Result<usize, MeshError> {
    let s = value / h;
    let r = s.round();
    if (s - r).abs() > 1e-9 * r.max(1.0) || r < 0.0 {
        return Err(MeshError::NonIntegral {
            what: what.to_string(),
            value,
            h,
        });
    }
    Ok(r as usize)
}

/// Builds the FD grid over `domain_box` and the FE mesh of `fem_box`, each
/// grid cell inside `fem_box` split into 2 triangles or 6 Kuhn tetrahedra.
pub fn build_hybrid_mesh(domain_box: &AxisBox, fem_box: &AxisBox, h: f64) -> Result<HybridMesh, MeshError> {
    let dim = domain_box.dim;
    if !(2..=3).contains(&dim) || fem_box.dim != dim {
        return Err(MeshError::Dimension(dim));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(MeshError::Spacing(h));
    }
    let mut extents = [1usize; 3];
    let mut fem_ext = [1usize; 3];
    let mut offset = [0usize; 3];
    for k in 0..dim {
        extents[k] = integral_steps(&format!("domain side {k}"), domain_box.side(k), h)? + 1;
        let lo = fem_box.min[k] - domain_box.min[k];
        let hi = domain_box.max[k] - fem_box.max[k];
        for margin in [lo, hi] {
            if margin < h * (1.0 - 1e-9) {
                return Err(MeshError::Margin { axis: k, margin, required: h });
            }
        }
        offset[k] = integral_steps(&format!("fem box offset {k}"), lo, h)?;
        let cells = integral_steps(&format!("fem box side {k}"), fem_box.side(k), h)?;
        if cells < 2 {
            return Err(MeshError::FemBoxTooSmall { axis: k, width: fem_box.side(k) });
        }
        fem_ext[k] = cells + 1;
    }

    let mut grid = StructuredGrid::new(dim, domain_box.min, extents, h)?;
    let local = |i: usize, j: usize, k: usize| i + fem_ext[0] * (j + fem_ext[1] * k);
    let mut nodes = Vec::with_capacity(fem_ext.iter().product());
    for k in 0..fem_ext[2] {
        for j in 0..fem_ext[1] {
            for i in 0..fem_ext[0] {
                let g = grid.index([offset[0] + i, offset[1] + j, offset[2] + k]);
                nodes.push(grid.coord(g));
            }
        }
    }
    let mut elements = Vec::new();
    if dim == 2 {
        for j in 0..fem_ext[1] - 1 {
            for i in 0..fem_ext[0] - 1 {
                let (n00, n10, n01, n11) = (local(i, j, 0), local(i + 1, j, 0), local(i, j + 1, 0), local(i + 1, j + 1, 0));
                elements.extend_from_slice(&[n00, n10, n11, n00, n11, n01]);
            }
        }
    } else {
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for k in 0..fem_ext[2] - 1 {
            for j in 0..fem_ext[1] - 1 {
                for i in 0..fem_ext[0] - 1 {
                    for perm in PERMS {
                        let mut c = [i, j, k];
                        let mut tet = [local(c[0], c[1], c[2]); 4];
                        for (s, &axis) in perm.iter().enumerate() {
                            c[axis] += 1;
                            tet[s + 1] = local(c[0], c[1], c[2]);
                        }
                        // Kuhn simplices alternate orientation with permutation parity
                        let odd = matches!(perm, [0, 2, 1] | [1, 0, 2] | [2, 1, 0]);
                        if odd {
                            tet.swap(2, 3);
                        }
                        elements.extend_from_slice(&tet);
                    }
                }
            }
        }
    }
    let ne = elements.len() / (dim + 1);
    let fem_mesh = SimplicialMesh::new(dim, nodes, elements, vec![0; ne])?;

    for n in 0..grid.node_count() {
        if grid.class(n) == NodeClass::OuterBoundary {
            continue;
        }
        let ijk = grid.ijk(n);
        let inside = (0..dim).all(|k| ijk[k] >= offset[k] && ijk[k] < offset[k] + fem_ext[k]);
        if !inside {
            continue;
        }
        let depth = (0..dim)
            .map(|k| {
                let l = ijk[k] - offset[k];
                l.min(fem_ext[k] - 1 - l)
            })
            .min()
            .unwrap();
        let class = match depth {
            0 => NodeClass::Interior,
            1 => NodeClass::Interface,
            _ => NodeClass::CoveredByFem,
        };
        grid.set_class(n, class);
    }

    Ok(HybridMesh::assemble(*domain_box, *fem_box, grid, fem_mesh))
}

impl HybridMesh {
    fn assemble(domain_box: AxisBox, fem_box: AxisBox, grid: StructuredGrid, fem_mesh: SimplicialMesh) -> Self {
        let h = grid.spacing();
        let tol = 1e-9 * h;
        let mut overlap = OverlapMap::default();
        let mut fem_boundary = vec![false; fem_mesh.node_count()];
        let mut frozen = vec![false; fem_mesh.node_count()];
        let mut grid_to_fem: HashMap<usize, usize> = HashMap::new();
        for (i, p) in fem_mesh.nodes().iter().enumerate() {
            let on_grid = grid.node_at(p, 1e-9);
            if let Some(g) = on_grid {
                grid_to_fem.insert(g, i);
            }
            if fem_box.on_boundary(p, tol) {
                fem_boundary[i] = true;
                match on_grid {
                    Some(g) => overlap.fem_to_fd.push((i, g)),
                    None => overlap
                        .boundary_stencils
                        .push((i, grid.interpolation_stencil(p))),
                }
            }
            frozen[i] = fem_box.depth(p) <= h * (1.0 + 1e-9);
        }
        for n in 0..grid.node_count() {
            if grid.class(n) == NodeClass::Interface {
                let f = *grid_to_fem
                    .get(&n)
                    .expect("interface grid node must be a FE node");
                overlap.fd_to_fem.push((n, f));
            }
        }
        let outer_boundary_nodes = grid.outer_boundary_nodes();
        Self {
            dim: grid.dim(),
            domain_box,
            fem_box,
            fdm_grid: grid,
            fem_mesh,
            overlap,
            outer_boundary_nodes,
            fem_boundary,
            frozen,
        }
    }

    /// Same FD grid with a new FE mesh of the same box (e.g. after refinement).
    pub fn with_fem_mesh(&self, fem_mesh: SimplicialMesh) -> Self {
        Self::assemble(self.domain_box, self.fem_box, self.fdm_grid.clone(), fem_mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain_box(&self) -> &AxisBox {
        &self.domain_box
    }

    pub fn fem_box(&self) -> &AxisBox {
        &self.fem_box
    }

    pub fn fdm_grid(&self) -> &StructuredGrid {
        &self.fdm_grid
    }

    pub fn fem_mesh(&self) -> &SimplicialMesh {
        &self.fem_mesh
    }

    pub fn overlap(&self) -> &OverlapMap {
        &self.overlap
    }

    pub fn h_fdm(&self) -> f64 {
        self.fdm_grid.spacing()
    }

    pub fn outer_boundary_nodes(&self) -> &[usize] {
        &self.outer_boundary_nodes
    }

    /// FE nodes on the FE box surface.
    pub fn fem_boundary_mask(&self) -> &[bool] {
        &self.fem_boundary
    }

    /// FE nodes within one grid step of the FE box surface. Coefficients
    /// there stay at the background values `eps = 1`, `sigma = 0`.
    pub fn frozen_mask(&self) -> &[bool] {
        &self.frozen
    }

    /// Smallest of the grid spacing and the shortest FE edge.
    pub fn h_min(&self) -> f64 {
        self.h_fdm().min(self.fem_mesh.shortest_edge())
    }

    pub fn fem_node(&self, i: usize) -> &Point {
        self.fem_mesh.node(i)
    }
}
