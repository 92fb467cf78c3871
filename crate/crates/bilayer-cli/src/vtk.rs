//! Legacy ASCII VTK export of deformation states.
//!
//! States are written as unstructured grids of quads over the deformed
//! vertex positions; only the vertex displacement degrees of freedom are
//! used, so viewers render the plate as continuous bilinear patches.
//! Point data carries the displacement from the reference configuration
//! and the nodal metric defect. The ASCII form with fixed float
//! formatting keeps files byte-reproducible.

use std::io::Write;
use std::path::Path;

use bilayer::kirchhoff::DeformationField;
use nalgebra::Matrix2;

/// Writes a deformation state as a legacy ASCII unstructured grid.
pub fn export_vtk(y: &DeformationField, path: &Path) -> std::io::Result<()> {
    let mesh = y.mesh();
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);

    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "bilayer plate deformation")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;

    let nv = mesh.vertex_count();
    writeln!(out, "POINTS {nv} double")?;
    for v in 0..nv {
        let p = y.value(v);
        writeln!(out, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2])?;
    }

    let nc = mesh.cell_count();
    writeln!(out, "CELLS {nc} {}", 5 * nc)?;
    for c in 0..nc {
        let q = mesh.cell_vertices(c);
        writeln!(out, "4 {} {} {} {}", q[0], q[1], q[2], q[3])?;
    }
    writeln!(out, "CELL_TYPES {nc}")?;
    for _ in 0..nc {
        writeln!(out, "9")?;
    }

    writeln!(out, "POINT_DATA {nv}")?;
    writeln!(out, "VECTORS displacement double")?;
    for v in 0..nv {
        let p = y.value(v);
        let x = mesh.vertex(v);
        writeln!(
            out,
            "{:.16e} {:.16e} {:.16e}",
            p[0] - x[0],
            p[1] - x[1],
            p[2]
        )?;
    }
    writeln!(out, "SCALARS metric_defect double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for v in 0..nv {
        let m = y.vertex_metric(v) - Matrix2::identity();
        let defect =
            (m[(0, 0)] * m[(0, 0)] + 2.0 * m[(0, 1)] * m[(0, 1)] + m[(1, 1)] * m[(1, 1)]).sqrt();
        writeln!(out, "{defect:.16e}")?;
    }
    out.flush()
}
