use crate::grid_mesh::{HybridMesh, NodeClass, Point, StructuredGrid};
use crate::media::CoefficientField;

use super::SolverError;

/// Nodal vector field on both parts of the hybrid mesh, `d` components per
/// node stored node-major. Entries not owned by a part (FD interface nodes,
/// FE box surface nodes) are ghosts filled by [`HybridOperator::exchange`].
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub fd: Vec<f64>,
    pub fe: Vec<f64>,
}

impl HybridState {
    pub fn zeros(n_fd: usize, n_fe: usize, dim: usize) -> Self {
        Self {
            fd: vec![0.0; n_fd * dim],
            fe: vec![0.0; n_fe * dim],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.fd
            .iter()
            .chain(&self.fe)
            .fold(0.0, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
    }
}

#[derive(Debug, Clone)]
struct Element {
    nodes: [usize; 4],
    vol: f64,
    grads: [Point; 4],
    /// `(mean eps - 1) * |K|`, weight of the div-div stabilization.
    kdiv: f64,
}

/// How the leading diagonal of a leapfrog row is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum StepKind {
    /// `D+ x^{n+1} = c x^n - D- x^{n-1} - L x^n + r`.
    Standard,
    /// `c x^{n+1} = c x^n - D- x^{n-1} - L x^n + r`, the closing step of the
    /// adjoint recurrence.
    Closing,
}

/// `(node, weight)` pairs.
pub type NodeWeights = Vec<(usize, f64)>;

/// Discrete hybrid operator for fixed coefficients and time step.
///
/// Every owned row `i` of the semi-discrete system reads
/// `a_i x'' + b_i x' + (L G x)_i = w_i f_i`, where `G` fills the ghosts from
/// owned values. On the FD part `a` is the dual-cell volume and `b` the
/// absorbing boundary measure; on the FE part `a = eps m`, `b = sigma m`
/// with the lumped mass `m`. `L` is the FD stiffness on the grid and the P1
/// stiffness plus `(mean eps - 1) div div` on the FE mesh.
#[derive(Debug, Clone)]
pub struct HybridOperator {
    dim: usize,
    dt: f64,
    grid: StructuredGrid,
    fe_nodes: Vec<Point>,
    fd_owned: Vec<usize>,
    fe_owned: Vec<usize>,
    fd_edges: Vec<(usize, usize, f64)>,
    elements: Vec<Element>,
    fd_ghosts: Vec<(usize, usize)>,
    fe_copies: Vec<(usize, usize)>,
    fe_stencils: Vec<(usize, Vec<(usize, f64)>)>,
    covered: Vec<(usize, usize)>,
    fd_a: Vec<f64>,
    fd_b: Vec<f64>,
    fd_w: Vec<f64>,
    fe_a: Vec<f64>,
    fe_b: Vec<f64>,
    fe_w: Vec<f64>,
    outer: Vec<usize>,
}

impl HybridOperator {
    pub fn new(mesh: &HybridMesh, coeffs: &CoefficientField, dt: f64) -> Result<Self, SolverError> {
        let fem = mesh.fem_mesh();
        let n_fe = fem.node_count();
        if coeffs.len() != n_fe {
            return Err(SolverError::Shape(format!(
                "coefficients have {} entries, FE mesh has {n_fe} nodes",
                coeffs.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SolverError::Shape(format!("time step {dt}")));
        }
        let dim = mesh.dim();
        let grid = mesh.fdm_grid().clone();
        let owned_class = |c: NodeClass| matches!(c, NodeClass::OuterBoundary | NodeClass::Interior);
        let fd_is_owned: Vec<bool> = grid.classes().iter().map(|&c| owned_class(c)).collect();
        let fd_owned: Vec<usize> = (0..grid.node_count()).filter(|&i| fd_is_owned[i]).collect();
        let fd_edges = fd_edge_list(&grid, &fd_is_owned);

        let boundary = mesh.fem_boundary_mask();
        let fe_owned: Vec<usize> = (0..n_fe).filter(|&i| !boundary[i]).collect();
        let mass = fem.lumped_mass();
        let elements = (0..fem.element_count())
            .map(|k| {
                let e = fem.element(k);
                let (vol, grads) = fem.p1_gradients(k);
                let mut nodes = [0usize; 4];
                nodes[..e.len()].copy_from_slice(e);
                let eps_bar = e.iter().map(|&n| coeffs.eps[n]).sum::<f64>() / e.len() as f64;
                Element { nodes, vol, grads, kdiv: (eps_bar - 1.0) * vol }
            })
            .collect();

        let mut fd_a = vec![0.0; grid.node_count()];
        let mut fd_b = vec![0.0; grid.node_count()];
        for &i in &fd_owned {
            fd_a[i] = grid.dual_volume(i);
            fd_b[i] = grid.boundary_measure(i);
        }
        let fd_w = fd_a.clone();
        let mut fe_a = vec![0.0; n_fe];
        let mut fe_b = vec![0.0; n_fe];
        let mut fe_w = vec![0.0; n_fe];
        for &i in &fe_owned {
            fe_a[i] = coeffs.eps[i] * mass[i];
            fe_b[i] = coeffs.sigma[i] * mass[i];
            fe_w[i] = mass[i];
        }

        let overlap = mesh.overlap();
        let covered = fem
            .nodes()
            .iter()
            .enumerate()
            .filter_map(|(f, p)| {
                let g = grid.node_at(p, 1e-9)?;
                (grid.class(g) == NodeClass::CoveredByFem).then_some((g, f))
            })
            .collect();
        Ok(Self {
            dim,
            dt,
            fe_nodes: fem.nodes().to_vec(),
            outer: mesh.outer_boundary_nodes().to_vec(),
            grid,
            fd_owned,
            fe_owned,
            fd_edges,
            elements,
            fd_ghosts: overlap.fd_to_fem.clone(),
            fe_copies: overlap.fem_to_fd.iter().map(|&(f, g)| (f, g)).collect(),
            fe_stencils: overlap.boundary_stencils.clone(),
            covered,
            fd_a,
            fd_b,
            fd_w,
            fe_a,
            fe_b,
            fe_w,
        })
    }

    /// Plain finite-difference operator on the whole grid of `mesh` with
    /// `eps = 1`, `sigma = 0`; the FE part is empty.
    pub fn pure_fd(mesh: &HybridMesh, dt: f64) -> Result<Self, SolverError> {
        let grid = mesh.fdm_grid().clone();
        Self::pure_fd_grid(grid, dt)
    }

    pub fn pure_fd_grid(grid: StructuredGrid, dt: f64) -> Result<Self, SolverError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SolverError::Shape(format!("time step {dt}")));
        }
        let n = grid.node_count();
        let owned = vec![true; n];
        let fd_edges = fd_edge_list(&grid, &owned);
        let fd_a: Vec<f64> = (0..n).map(|i| grid.dual_volume(i)).collect();
        let fd_b = (0..n).map(|i| grid.boundary_measure(i)).collect();
        Ok(Self {
            dim: grid.dim(),
            dt,
            fe_nodes: Vec::new(),
            outer: grid.outer_boundary_nodes(),
            fd_owned: (0..n).collect(),
            fe_owned: Vec::new(),
            fd_edges,
            elements: Vec::new(),
            fd_ghosts: Vec::new(),
            fe_copies: Vec::new(),
            fe_stencils: Vec::new(),
            covered: Vec::new(),
            fd_w: fd_a.clone(),
            fd_a,
            fd_b,
            fe_a: Vec::new(),
            fe_b: Vec::new(),
            fe_w: Vec::new(),
            grid,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn fe_nodes(&self) -> &[Point] {
        &self.fe_nodes
    }

    pub fn fd_owned(&self) -> &[usize] {
        &self.fd_owned
    }

    pub fn fe_owned(&self) -> &[usize] {
        &self.fe_owned
    }

    pub fn outer_boundary_nodes(&self) -> &[usize] {
        &self.outer
    }

    pub fn zero_state(&self) -> HybridState {
        HybridState::zeros(self.grid.node_count(), self.fe_nodes.len(), self.dim)
    }

    /// Quadrature weight of every owned node (dual-cell volume or lumped
    /// mass); the owned nodes tile the domain.
    pub fn owned_weights(&self) -> (NodeWeights, NodeWeights) {
        (
            self.fd_owned.iter().map(|&i| (i, self.fd_w[i])).collect(),
            self.fe_owned.iter().map(|&i| (i, self.fe_w[i])).collect(),
        )
    }

    pub fn boundary_weight(&self, fd_node: usize) -> f64 {
        self.grid.boundary_measure(fd_node)
    }

    /// Overwrites the ghosts of `x`: FD interface nodes from the FE solution
    /// and FE box surface nodes from the FD solution.
    pub fn exchange(&self, x: &mut HybridState) {
        let d = self.dim;
        for &(n, f) in &self.fd_ghosts {
            for c in 0..d {
                x.fd[n * d + c] = x.fe[f * d + c];
            }
        }
        for &(f, g) in &self.fe_copies {
            for c in 0..d {
                x.fe[f * d + c] = x.fd[g * d + c];
            }
        }
        for (f, st) in &self.fe_stencils {
            for c in 0..d {
                x.fe[f * d + c] = st.iter().map(|&(g, w)| w * x.fd[g * d + c]).sum();
            }
        }
    }

    /// Transpose of [`exchange`](Self::exchange) read as a map from owned
    /// entries to all entries: ghost entries are added onto their sources
    /// and then cleared.
    pub fn exchange_transpose(&self, y: &mut HybridState) {
        let d = self.dim;
        for &(n, f) in &self.fd_ghosts {
            for c in 0..d {
                y.fe[f * d + c] += y.fd[n * d + c];
                y.fd[n * d + c] = 0.0;
            }
        }
        for &(f, g) in &self.fe_copies {
            for c in 0..d {
                y.fd[g * d + c] += y.fe[f * d + c];
                y.fe[f * d + c] = 0.0;
            }
        }
        for (f, st) in &self.fe_stencils {
            for c in 0..d {
                let v = y.fe[f * d + c];
                for &(g, w) in st {
                    y.fd[g * d + c] += w * v;
                }
                y.fe[f * d + c] = 0.0;
            }
        }
    }

    /// Copies FE values onto FD nodes hidden under the FE mesh, for output.
    pub fn fill_covered(&self, x: &mut HybridState) {
        let d = self.dim;
        for &(g, f) in &self.covered {
            for c in 0..d {
                x.fd[g * d + c] = x.fe[f * d + c];
            }
        }
    }

    /// Zeroes every entry not owned by its part.
    pub fn clear_ghosts(&self, x: &mut HybridState) {
        let d = self.dim;
        let mut keep = vec![false; self.grid.node_count()];
        self.fd_owned.iter().for_each(|&i| keep[i] = true);
        for (i, k) in keep.iter().enumerate() {
            if !k {
                x.fd[i * d..(i + 1) * d].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut keep = vec![false; self.fe_nodes.len()];
        self.fe_owned.iter().for_each(|&i| keep[i] = true);
        for (i, k) in keep.iter().enumerate() {
            if !k {
                x.fe[i * d..(i + 1) * d].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// FD stiffness applied to a full FD array; rows of owned nodes are exact.
    pub fn apply_fd(&self, u: &[f64], y: &mut [f64]) {
        let d = self.dim;
        y.iter_mut().for_each(|v| *v = 0.0);
        for &(i, j, w) in &self.fd_edges {
            for c in 0..d {
                let t = w * (u[i * d + c] - u[j * d + c]);
                y[i * d + c] += t;
                y[j * d + c] -= t;
            }
        }
    }

    /// P1 stiffness plus div-div stabilization applied to a full FE array.
    pub fn apply_fe(&self, u: &[f64], y: &mut [f64]) {
        let d = self.dim;
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut ul = [0.0; 12];
        let mut yl = [0.0; 12];
        for el in &self.elements {
            let nv = d + 1;
            for a in 0..nv {
                ul[a * d..(a + 1) * d].copy_from_slice(&u[el.nodes[a] * d..(el.nodes[a] + 1) * d]);
            }
            element_apply(el, d, &ul, &mut yl);
            for a in 0..nv {
                let n = el.nodes[a];
                for c in 0..d {
                    y[n * d + c] += yl[a * d + c];
                }
            }
        }
    }

    /// Dense local matrix of element `k`, rows and columns ordered
    /// `(vertex, component)`: P1 stiffness plus div-div stabilization.
    pub fn element_matrix(&self, k: usize) -> (Vec<usize>, Vec<f64>) {
        let d = self.dim;
        let el = &self.elements[k];
        let n = (d + 1) * d;
        let mut m = vec![0.0; n * n];
        let mut ul = [0.0; 12];
        let mut yl = [0.0; 12];
        for j in 0..n {
            ul.iter_mut().for_each(|v| *v = 0.0);
            ul[j] = 1.0;
            element_apply(el, d, &ul, &mut yl);
            for i in 0..n {
                m[i * n + j] = yl[i];
            }
        }
        (el.nodes[..=d].to_vec(), m)
    }

    /// Per-element divergence of a P1 FE field.
    pub fn element_divergence(&self, u: &[f64], out: &mut Vec<f64>) {
        let d = self.dim;
        out.clear();
        out.extend(self.elements.iter().map(|el| {
            (0..=d)
                .map(|a| (0..d).map(|c| u[el.nodes[a] * d + c] * el.grads[a][c]).sum::<f64>())
                .sum::<f64>()
        }));
    }

    /// `L G x` on owned rows, ghosts of the result zeroed. `x` is not
    /// required to have its ghosts filled.
    pub fn apply_lhat(&self, x: &HybridState) -> HybridState {
        let mut g = x.clone();
        self.exchange(&mut g);
        let mut y = self.zero_state();
        self.apply_fd(&g.fd, &mut y.fd);
        self.apply_fe(&g.fe, &mut y.fe);
        self.clear_ghosts(&mut y);
        y
    }

    /// `(L G)^T x` for `x` given on owned rows (ghosts ignored).
    pub fn apply_lhat_transpose(&self, x: &HybridState) -> HybridState {
        let mut m = x.clone();
        self.clear_ghosts(&mut m);
        let mut y = self.zero_state();
        self.apply_fd(&m.fd, &mut y.fd);
        self.apply_fe(&m.fe, &mut y.fe);
        self.exchange_transpose(&mut y);
        y
    }

    /// Euclidean inner product over owned entries.
    pub fn owned_dot(&self, x: &HybridState, y: &HybridState) -> f64 {
        let d = self.dim;
        let fd: f64 = self
            .fd_owned
            .iter()
            .flat_map(|&i| i * d..(i + 1) * d)
            .map(|k| x.fd[k] * y.fd[k])
            .sum();
        let fe: f64 = self
            .fe_owned
            .iter()
            .flat_map(|&i| i * d..(i + 1) * d)
            .map(|k| x.fe[k] * y.fe[k])
            .sum();
        fd + fe
    }

    #[allow(clippy::too_many_arguments)]
    fn rows_update(
        &self,
        owned: &[usize],
        a: &[f64],
        b: &[f64],
        prev: Option<&[f64]>,
        curr: &[f64],
        lx: &[f64],
        rhs: Option<&[f64]>,
        kind: StepKind,
        next: &mut [f64],
    ) {
        let d = self.dim;
        let dt = self.dt;
        for &i in owned {
            let mt = a[i] / (dt * dt);
            let damp = b[i] / (2.0 * dt);
            let c = 2.0 * mt;
            let dm = mt - damp;
            let p = match kind {
                StepKind::Standard => mt + damp,
                StepKind::Closing => c,
            };
            for k in i * d..(i + 1) * d {
                let mut r = c * curr[k] - lx[k];
                if let Some(prev) = prev {
                    r -= dm * prev[k];
                }
                if let Some(rhs) = rhs {
                    r += rhs[k];
                }
                next[k] = r / p;
            }
        }
    }

    /// First forward step `c (x^1 - x^0) = 2 dt D- f1 - L x^0 + r`, i.e.
    /// leapfrog with `x^{-1} = x^1 - 2 dt f1`.
    #[allow(clippy::too_many_arguments)]
    fn first_rows(&self, owned: &[usize], a: &[f64], b: &[f64], x0: &[f64], f1: &[f64], lx: &[f64], rhs: Option<&[f64]>, next: &mut [f64]) {
        let d = self.dim;
        let dt = self.dt;
        for &i in owned {
            let mt = a[i] / (dt * dt);
            let dm = mt - b[i] / (2.0 * dt);
            let c = 2.0 * mt;
            for k in i * d..(i + 1) * d {
                let mut r = 2.0 * dt * dm * f1[k] - lx[k];
                if let Some(rhs) = rhs {
                    r += rhs[k];
                }
                next[k] = x0[k] + r / c;
            }
        }
    }

    /// One leapfrog step on the FD-owned rows. `curr` must have its
    /// interface ghosts filled; ghosts of `next` are left untouched.
    pub fn step_fdm(&self, prev: &[f64], curr: &[f64], next: &mut [f64]) {
        let mut lx = vec![0.0; curr.len()];
        self.apply_fd(curr, &mut lx);
        self.rows_update(&self.fd_owned, &self.fd_a, &self.fd_b, Some(prev), curr, &lx, None, StepKind::Standard, next);
    }

    /// One leapfrog step on the FE-owned rows. `curr` must have its FE box
    /// surface ghosts filled; ghosts of `next` are left untouched.
    pub fn step_fem(&self, prev: &[f64], curr: &[f64], next: &mut [f64]) {
        let mut lx = vec![0.0; curr.len()];
        self.apply_fe(curr, &mut lx);
        self.rows_update(&self.fe_owned, &self.fe_a, &self.fe_b, Some(prev), curr, &lx, None, StepKind::Standard, next);
    }

    /// `L G x` of a state whose ghosts are already filled, on full arrays.
    pub(crate) fn lx_filled(&self, x: &HybridState, lx: &mut HybridState) {
        self.apply_fd(&x.fd, &mut lx.fd);
        self.apply_fe(&x.fe, &mut lx.fe);
    }

    /// Owned-row update of a full state given `lx`; see [`StepKind`].
    pub(crate) fn update(
        &self,
        prev: Option<&HybridState>,
        curr: &HybridState,
        lx: &HybridState,
        rhs: Option<&HybridState>,
        kind: StepKind,
        next: &mut HybridState,
    ) {
        self.rows_update(
            &self.fd_owned,
            &self.fd_a,
            &self.fd_b,
            prev.map(|p| p.fd.as_slice()),
            &curr.fd,
            &lx.fd,
            rhs.map(|r| r.fd.as_slice()),
            kind,
            &mut next.fd,
        );
        self.rows_update(
            &self.fe_owned,
            &self.fe_a,
            &self.fe_b,
            prev.map(|p| p.fe.as_slice()),
            &curr.fe,
            &lx.fe,
            rhs.map(|r| r.fe.as_slice()),
            kind,
            &mut next.fe,
        );
    }

    pub(crate) fn first_update(&self, x0: &HybridState, f1: &HybridState, lx: &HybridState, rhs: Option<&HybridState>, next: &mut HybridState) {
        self.first_rows(&self.fd_owned, &self.fd_a, &self.fd_b, &x0.fd, &f1.fd, &lx.fd, rhs.map(|r| r.fd.as_slice()), &mut next.fd);
        self.first_rows(&self.fe_owned, &self.fe_a, &self.fe_b, &x0.fe, &f1.fe, &lx.fe, rhs.map(|r| r.fe.as_slice()), &mut next.fe);
    }

    /// Mass-weighted nodal load `w_i F(t, x_i)` on owned rows.
    pub(crate) fn load<F: Fn(&Point) -> [f64; 3]>(&self, f: F, out: &mut HybridState) -> f64 {
        let d = self.dim;
        let mut fmax = 0.0f64;
        for &i in &self.fd_owned {
            let v = f(&self.grid.coord(i));
            for c in 0..d {
                out.fd[i * d + c] = self.fd_w[i] * v[c];
                fmax = fmax.max(v[c].abs());
            }
        }
        for &i in &self.fe_owned {
            let v = f(&self.fe_nodes[i]);
            for c in 0..d {
                out.fe[i * d + c] = self.fe_w[i] * v[c];
                fmax = fmax.max(v[c].abs());
            }
        }
        fmax
    }

    /// Evaluates a vector field at the owned nodes; ghosts are zero.
    pub fn sample_owned<F: Fn(&Point) -> [f64; 3]>(&self, f: F) -> HybridState {
        let d = self.dim;
        let mut out = self.zero_state();
        for &i in &self.fd_owned {
            let v = f(&self.grid.coord(i));
            out.fd[i * d..(i + 1) * d].copy_from_slice(&v[..d]);
        }
        for &i in &self.fe_owned {
            let v = f(&self.fe_nodes[i]);
            out.fe[i * d..(i + 1) * d].copy_from_slice(&v[..d]);
        }
        out
    }

    /// Modified leapfrog energy
    /// `1/2 (|x^{n+1} - x^n|_a^2 / dt^2 + x^{n+1} . L G x^n)`,
    /// non-increasing in `n` whenever the time step is stable.
    pub fn energy_with(&self, curr: &HybridState, next: &HybridState, lx_curr: &HybridState) -> f64 {
        let d = self.dim;
        let dt2 = self.dt * self.dt;
        let mut e = 0.0;
        for (owned, a, x, y, l) in [
            (&self.fd_owned, &self.fd_a, &curr.fd, &next.fd, &lx_curr.fd),
            (&self.fe_owned, &self.fe_a, &curr.fe, &next.fe, &lx_curr.fe),
        ] {
            for &i in owned.iter() {
                for k in i * d..(i + 1) * d {
                    let v = y[k] - x[k];
                    e += a[i] * v * v / dt2 + y[k] * l[k];
                }
            }
        }
        0.5 * e
    }
}

/// Local action `y = (K + kdiv div div) u` on vertex-major component arrays.
fn element_apply(el: &Element, d: usize, u: &[f64], y: &mut [f64]) {
    let nv = d + 1;
    let mut grad = [[0.0; 3]; 3];
    let mut div = 0.0;
    for a in 0..nv {
        for c in 0..d {
            let v = u[a * d + c];
            for k in 0..d {
                grad[c][k] += v * el.grads[a][k];
            }
            div += v * el.grads[a][c];
        }
    }
    for a in 0..nv {
        for c in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += el.grads[a][k] * grad[c][k];
            }
            y[a * d + c] = el.vol * s + el.kdiv * div * el.grads[a][c];
        }
    }
}

/// Edges of the FD grid with at least one owned endpoint, each listed once.
fn fd_edge_list(grid: &StructuredGrid, owned: &[bool]) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for i in 0..grid.node_count() {
        if !owned[i] {
            continue;
        }
        for (j, w) in grid.neighbors(i) {
            if !owned[j] || i < j {
                edges.push((i, j, w));
            }
        }
    }
    edges
}
