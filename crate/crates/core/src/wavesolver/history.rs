use std::io::{Read, Write};

use crate::grid_mesh::Point;

use super::{SolverError, TimeGrid};

/// Snapshots of a nodal vector field at every time level `0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldHistory {
    dim: usize,
    nodes: usize,
    levels: usize,
    data: Vec<f64>,
}

impl FieldHistory {
    pub fn zeros(dim: usize, nodes: usize, levels: usize) -> Self {
        Self { dim, nodes, levels, data: vec![0.0; dim * nodes * levels] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// Number of stored time levels, `steps + 1`.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn snapshot(&self, n: usize) -> &[f64] {
        let s = self.dim * self.nodes;
        &self.data[n * s..(n + 1) * s]
    }

    pub fn snapshot_mut(&mut self, n: usize) -> &mut [f64] {
        let s = self.dim * self.nodes;
        &mut self.data[n * s..(n + 1) * s]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Field values at the outer boundary nodes over time.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    dim: usize,
    nodes: Vec<usize>,
    coords: Vec<Point>,
    times: Vec<f64>,
    values: Vec<f64>,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl BoundaryTrace {
    pub fn zeros(dim: usize, nodes: Vec<usize>, coords: Vec<Point>, times: Vec<f64>) -> Self {
        let n = dim * nodes.len() * times.len();
        Self { dim, nodes, coords, times, values: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// FD grid indices of the recorded nodes.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, n: usize) -> &[f64] {
        let s = self.dim * self.nodes.len();
        &self.values[n * s..(n + 1) * s]
    }

    pub fn at_mut(&mut self, n: usize) -> &mut [f64] {
        let s = self.dim * self.nodes.len();
        &mut self.values[n * s..(n + 1) * s]
    }

    /// Same nodes and time levels (to a relative `1e-9` in time).
    pub fn same_layout(&self, other: &BoundaryTrace) -> bool {
        self.dim == other.dim
            && self.nodes == other.nodes
            && self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(1.0))
    }

    /// `self - other` sample by sample.
    pub fn difference(&self, other: &BoundaryTrace) -> Result<BoundaryTrace, SolverError> {
        if !self.same_layout(other) {
            return Err(SolverError::Mismatch("traces are on different grids".into()));
        }
        let mut out = self.clone();
        out.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    /// The samples at the nodes whose coordinates match `coords` within
    /// `tol`, relabelled as `nodes`. Fails if a point has no match.
    pub fn restrict(&self, nodes: &[usize], coords: &[Point], tol: f64) -> Result<BoundaryTrace, SolverError> {
        let d = self.dim;
        let key = |p: &Point| -> [i64; 3] { [0, 1, 2].map(|k| (p[k] / tol).round() as i64) };
        let index: std::collections::HashMap<[i64; 3], usize> =
            self.coords.iter().enumerate().map(|(j, p)| (key(p), j)).collect();
        let src: Vec<usize> = coords
            .iter()
            .map(|p| {
                index
                    .get(&key(p))
                    .copied()
                    .filter(|&j| (0..d).all(|k| (self.coords[j][k] - p[k]).abs() <= tol))
                    .ok_or_else(|| SolverError::Mismatch(format!("no trace node at {p:?}")))
            })
            .collect::<Result<_, _>>()?;
        let mut out = BoundaryTrace::zeros(d, nodes.to_vec(), coords.to_vec(), self.times.clone());
        for n in 0..self.times.len() {
            let from = self.at(n);
            let dst = out.at_mut(n);
            for (i, &j) in src.iter().enumerate() {
                dst[i * d..(i + 1) * d].copy_from_slice(&from[j * d..(j + 1) * d]);
            }
        }
        Ok(out)
    }

    /// Piecewise-linear resampling in time onto `tg`; times past the last
    /// sample hold the last value.
    pub fn resample(&self, tg: &TimeGrid) -> BoundaryTrace {
        let s = self.dim * self.nodes.len();
        let times = tg.times();
        let mut out = BoundaryTrace::zeros(self.dim, self.nodes.clone(), self.coords.clone(), times.clone());
        let last = self.times.len() - 1;
        for (n, &t) in times.iter().enumerate() {
            let k = match self.times.partition_point(|&x| x <= t) {
                0 => 0,
                p => (p - 1).min(last.saturating_sub(1)),
            };
            let (w0, w1) = if last == 0 {
                (1.0, 0.0)
            } else {
                let (t0, t1) = (self.times[k], self.times[k + 1]);
                let th = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                (1.0 - th, th)
            };
            let k1 = (k + 1).min(last);
            let dst = &mut out.values[n * s..(n + 1) * s];
            for (j, v) in dst.iter_mut().enumerate() {
                *v = w0 * self.values[k * s + j] + w1 * self.values[k1 * s + j];
            }
        }
        out
    }

    /// CSV rows `t,node_id,x,y[,z],Ex,Ey[,Ez]`, preceded by `# key=value`
    /// comment lines.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[(&str, String)]) -> std::io::Result<()> {
        for (k, v) in comments {
            writeln!(w, "# {k}={v}")?;
        }
        let axes = ["x", "y", "z"];
        let comps = ["Ex", "Ey", "Ez"];
        let mut header = vec!["t".to_string(), "node_id".to_string()];
        header.extend(axes[..self.dim].iter().map(|s| s.to_string()));
        header.extend(comps[..self.dim].iter().map(|s| s.to_string()));
        writeln!(w, "{}", header.join(","))?;
        let d = self.dim;
        let mut line = String::new();
        for (n, &t) in self.times.iter().enumerate() {
            let vals = self.at(n);
            for (j, &node) in self.nodes.iter().enumerate() {
                line.clear();
                line.push_str(&fmt17(t));
                line.push(',');
                line.push_str(&node.to_string());
                for k in 0..d {
                    line.push(',');
                    line.push_str(&fmt17(self.coords[j][k]));
                }
                for c in 0..d {
                    line.push(',');
                    line.push_str(&fmt17(vals[j * d + c]));
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }

    /// Reads the format of [`write_csv`](Self::write_csv), returning the
    /// trace and the `# key=value` comments.
    pub fn read_csv<R: Read>(r: R) -> Result<(BoundaryTrace, Vec<(String, String)>), SolverError> {
        let mut text = String::new();
        let mut r = r;
        r.read_to_string(&mut text).map_err(|e| SolverError::Format(e.to_string()))?;
        let mut comments = Vec::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line.trim_start_matches('#').trim().split_once('=') {
                comments.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| SolverError::Format(e.to_string()))?.clone();
        let dim = match header.len() {
            6 => 2,
            8 => 3,
            n => return Err(SolverError::Format(format!("trace CSV has {n} columns"))),
        };
        let mut times: Vec<f64> = Vec::new();
        let mut nodes: Vec<usize> = Vec::new();
        let mut coords: Vec<Point> = Vec::new();
        let mut values = Vec::new();
        let mut in_first = true;
        let mut pos = 0usize;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| SolverError::Format(e.to_string()))?;
            let num = |i: usize| -> Result<f64, SolverError> {
                rec[i].trim().parse().map_err(|_| SolverError::Format(format!("bad number {:?}", &rec[i])))
            };
            let t = num(0)?;
            let node: usize = rec[1].trim().parse().map_err(|_| SolverError::Format(format!("bad node id {:?}", &rec[1])))?;
            if times.last().is_none_or(|&l| l != t) {
                if !times.is_empty() {
                    if in_first {
                        in_first = false;
                    } else if pos != nodes.len() {
                        return Err(SolverError::Format(format!("time {t}: incomplete block")));
                    }
                }
                times.push(t);
                pos = 0;
            }
            if in_first {
                nodes.push(node);
                let mut p = [0.0; 3];
                for (k, v) in p.iter_mut().enumerate().take(dim) {
                    *v = num(2 + k)?;
                }
                coords.push(p);
            } else if nodes.get(pos) != Some(&node) {
                return Err(SolverError::Format(format!("time {t}: unexpected node {node}")));
            }
            pos += 1;
            for c in 0..dim {
                values.push(num(2 + dim + c)?);
            }
        }
        if times.is_empty() || pos != nodes.len() {
            return Err(SolverError::Format("empty or truncated trace".into()));
        }
        Ok((BoundaryTrace { dim, nodes, coords, times, values }, comments))
    }
}
