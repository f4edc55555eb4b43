//! Legacy VTK and CSV writers, OFF reader.
//!
//! Floats are written with 17 significant digits so files round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::VertexField;
use crate::mesh::SurfaceMesh;

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Legacy ASCII VTK POLYDATA of `mesh` with one `VECTORS` section per field.
/// Two-dimensional data is padded with a zero third component.
pub fn vtk_string(mesh: &SurfaceMesh, fields: &[(&str, &VertexField)]) -> Result<String> {
    for (name, f) in fields {
        f.check_mesh(mesh)?;
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("invalid VTK field name {name:?}")));
        }
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 2.0\ngeoflow surface map\nASCII\nDATASET POLYDATA\n");
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for i in 0..mesh.n_vertices() {
        let p = mesh.vertex_padded(i);
        let _ = writeln!(s, "{} {} {}", float(p[0]), float(p[1]), float(p[2]));
    }
    let k = mesh.nodes_per_simplex();
    let keyword = if mesh.dim_surface() == 1 { "LINES" } else { "POLYGONS" };
    let _ = writeln!(s, "{keyword} {} {}", mesh.n_simplices(), mesh.n_simplices() * (k + 1));
    for simplex in mesh.simplices() {
        let _ = write!(s, "{k}");
        for v in simplex {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", mesh.n_vertices());
        for (name, f) in fields {
            let _ = writeln!(s, "VECTORS {name} double");
            for i in 0..f.n_vertices() {
                let p = f.padded(i);
                let _ = writeln!(s, "{} {} {}", float(p[0]), float(p[1]), float(p[2]));
            }
        }
    }
    Ok(s)
}

pub fn export_vtk(mesh: &SurfaceMesh, fields: &[(&str, &VertexField)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let s = vtk_string(mesh, fields)?;
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Comma-separated values with a header row.
pub fn csv_string(header: &[&str], rows: &[Vec<f64>]) -> Result<String> {
    let mut s = header.join(",");
    s.push('\n');
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::InvalidArgument(format!(
                "CSV row {i} has {} columns, header has {}",
                row.len(),
                header.len()
            )));
        }
        let cells: Vec<String> = row.iter().map(|&v| float(v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    Ok(s)
}

pub fn export_csv(header: &[&str], rows: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let s = csv_string(header, rows)?;
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Parses an OFF triangle mesh. Polygons with more than three vertices are
/// rejected; the result is validated as a closed surface.
pub fn parse_off(text: &str, path: &Path) -> Result<SurfaceMesh> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (ln, first) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let counts_line = if first == "OFF" {
        lines.next().ok_or_else(|| err(ln, "missing counts".into()))?
    } else if let Some(rest) = first.strip_prefix("OFF") {
        (ln, rest.trim())
    } else {
        return Err(err(ln, format!("expected OFF header, found {first:?}")));
    };
    let counts: Vec<usize> = counts_line
        .1
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(counts_line.0, format!("bad count {t:?}"))))
        .collect::<Result<_>>()?;
    if counts.len() < 2 {
        return Err(err(counts_line.0, "expected 'nv nf ne'".into()));
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| err(0, "unexpected end of vertices".into()))?;
        let xs: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(ln, format!("bad coordinate {t:?}"))))
            .collect::<Result<_>>()?;
        if xs.len() != 3 {
            return Err(err(ln, format!("expected 3 coordinates, found {}", xs.len())));
        }
        vertices.push([xs[0], xs[1], xs[2]]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| err(0, "unexpected end of faces".into()))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(ln, format!("bad index {t:?}"))))
            .collect::<Result<_>>()?;
        if idx.len() < 4 || idx[0] != 3 {
            return Err(err(ln, "only triangular faces are supported".into()));
        }
        faces.push([idx[1], idx[2], idx[3]]);
    }
    SurfaceMesh::from_triangles(vertices, faces)
}

pub fn read_off(path: impl AsRef<Path>) -> Result<SurfaceMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_off(&text, path)
}
