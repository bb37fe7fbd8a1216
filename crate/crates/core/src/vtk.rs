//! Legacy ASCII VTK output for FE fields and structured-grid fields.

use std::io::{self, Write};

use crate::grid_mesh::{SimplicialMesh, StructuredGrid};

/// Nodal data attached to a dataset. Vectors hold `dim` components per node
/// and are padded to three on output.
#[derive(Debug, Clone, Copy)]
pub enum PointData<'a> {
    Scalar(&'a str, &'a [f64]),
    Vector(&'a str, usize, &'a [f64]),
}

impl PointData<'_> {
    fn len(&self) -> usize {
        match self {
            Self::Scalar(_, v) => v.len(),
            Self::Vector(_, d, v) => v.len() / d.max(&1),
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_point_data<W: Write>(w: &mut W, n: usize, data: &[PointData<'_>]) -> io::Result<()> {
    if data.is_empty() {
        return Ok(());
    }
    for d in data {
        if d.len() != n {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("point data has {} entries, dataset has {n} points", d.len()),
            ));
        }
    }
    writeln!(w, "POINT_DATA {n}")?;
    for d in data {
        match *d {
            PointData::Scalar(name, v) => {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for x in v {
                    writeln!(w, "{}", num(*x))?;
                }
            }
            PointData::Vector(name, dim, v) => {
                writeln!(w, "VECTORS {name} double")?;
                for c in v.chunks(dim) {
                    let mut p = [0.0; 3];
                    p[..dim].copy_from_slice(c);
                    writeln!(w, "{} {} {}", num(p[0]), num(p[1]), num(p[2]))?;
                }
            }
        }
    }
    Ok(())
}

/// `UNSTRUCTURED_GRID` of triangles (cell type 5) or tetrahedra (type 10).
pub fn write_unstructured<W: Write>(mut w: W, title: &str, mesh: &SimplicialMesh, data: &[PointData<'_>]) -> io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.node_count())?;
    for p in mesh.nodes() {
        writeln!(w, "{} {} {}", num(p[0]), num(p[1]), num(p[2]))?;
    }
    let per = mesh.dim() + 1;
    let ne = mesh.element_count();
    writeln!(w, "CELLS {ne} {}", ne * (per + 1))?;
    for e in mesh.elements() {
        write!(w, "{per}")?;
        for v in e {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {ne}")?;
    let ty = if mesh.dim() == 2 { 5 } else { 10 };
    for _ in 0..ne {
        writeln!(w, "{ty}")?;
    }
    write_point_data(&mut w, mesh.node_count(), data)
}

/// `STRUCTURED_POINTS` over the nodes of `grid`.
pub fn write_structured_points<W: Write>(mut w: W, title: &str, grid: &StructuredGrid, data: &[PointData<'_>]) -> io::Result<()> {
    let e = grid.extents();
    let o = grid.origin();
    let h = grid.spacing();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", e[0], e[1], e[2])?;
    writeln!(w, "ORIGIN {} {} {}", num(o[0]), num(o[1]), num(o[2]))?;
    let hz = if grid.dim() == 2 { 1.0 } else { h };
    writeln!(w, "SPACING {} {} {}", num(h), num(h), num(hz))?;
    write_point_data(&mut w, grid.node_count(), data)
}
