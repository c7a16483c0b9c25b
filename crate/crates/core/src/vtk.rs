//! Legacy ASCII VTK export of a mesh level, one VTK cell per base cell.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::MeshLevel;

const VTK_POLYGON: u8 = 7;
const VTK_HEXAHEDRON: u8 = 12;

/// Corners of an axis-aligned 3D base cell in VTK hexahedron order.
fn hex_order(level: &MeshLevel, corners: &[usize]) -> Result<Vec<usize>> {
    let verts = &level.base.vertices;
    if corners.len() != 8 {
        return Err(Error::InvalidParameter(format!("expected 8 hexahedron corners, got {}", corners.len())));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &c in corners {
        for d in 0..3 {
            lo[d] = lo[d].min(verts[c][d]);
            hi[d] = hi[d].max(verts[c][d]);
        }
    }
    let mut slots = [usize::MAX; 8];
    for &c in corners {
        let bit = |d: usize| (verts[c][d] - lo[d]).abs() > 0.5 * (hi[d] - lo[d]);
        let (x, y, z) = (bit(0), bit(1), bit(2));
        let quad = match (x, y) {
            (false, false) => 0,
            (true, false) => 1,
            (true, true) => 2,
            (false, true) => 3,
        };
        slots[quad + if z { 4 } else { 0 }] = c;
    }
    Ok(slots.to_vec())
}

/// Render `level` with per-agglomerate data. Every entry of `cell_data` holds
/// one value per cell of the level; the agglomerate index is always written.
pub fn render_level(level: &MeshLevel, cell_data: &[(&str, &[f64])]) -> Result<String> {
    let base = &level.base;
    for (name, values) in cell_data {
        if values.len() != level.num_cells() {
            return Err(Error::InvalidParameter(format!(
                "cell field '{name}' has {} values for {} cells",
                values.len(),
                level.num_cells()
            )));
        }
    }
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "# vtk DataFile Version 3.0").unwrap();
    writeln!(w, "hhomg level with {} cells", level.num_cells()).unwrap();
    writeln!(w, "ASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(w, "POINTS {} double", base.vertices.len()).unwrap();
    for p in &base.vertices {
        writeln!(w, "{} {} {}", p[0], p[1], p[2]).unwrap();
    }
    let conn: Vec<Vec<usize>> = base
        .cells
        .iter()
        .map(|c| if base.dim == 3 { hex_order(level, &c.vertices) } else { Ok(c.vertices.clone()) })
        .collect::<Result<_>>()?;
    let size: usize = conn.iter().map(|c| c.len() + 1).sum();
    writeln!(w, "CELLS {} {size}", conn.len()).unwrap();
    for c in &conn {
        write!(w, "{}", c.len()).unwrap();
        for v in c {
            write!(w, " {v}").unwrap();
        }
        writeln!(w).unwrap();
    }
    writeln!(w, "CELL_TYPES {}", conn.len()).unwrap();
    let ty = if base.dim == 3 { VTK_HEXAHEDRON } else { VTK_POLYGON };
    for _ in &conn {
        writeln!(w, "{ty}").unwrap();
    }
    writeln!(w, "CELL_DATA {}", conn.len()).unwrap();
    writeln!(w, "SCALARS agglomerate int 1\nLOOKUP_TABLE default").unwrap();
    for &t in &level.cell_of_base {
        writeln!(w, "{t}").unwrap();
    }
    for (name, values) in cell_data {
        writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for &t in &level.cell_of_base {
            writeln!(w, "{}", values[t]).unwrap();
        }
    }
    Ok(out)
}

pub fn write_level(path: &Path, level: &MeshLevel, cell_data: &[(&str, &[f64])]) -> Result<()> {
    std::fs::write(path, render_level(level, cell_data)?)?;
    Ok(())
}
