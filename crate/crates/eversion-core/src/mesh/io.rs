//! ASCII mesh serialization: a strict subset of Wavefront OBJ.
//!
//! Only `v x y z` and `f i j k` records (plus `#` comments and blank lines)
//! are admitted; faces are triangles with plain 1-based indices (no `a/b/c`
//! forms, no negative indices). Floats are written in Rust's shortest
//! round-trip form, so write → read → write is byte-identical.

use super::{MeshError, TriMesh};
use crate::real::Real;
use nalgebra::Vector3;
use std::fmt::Write as _;
use std::path::Path;

/// Canonical file extension for mesh frames.
pub const MESH_EXTENSION: &str = "obj";

/// Errors from [`read_mesh`]/[`read_mesh_str`], with 1-based line/column.
#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("mesh construction failed: {0}")]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

/// Serializes a mesh: all vertices, then all faces, 1-based indices.
pub fn write_mesh_string<T: Real>(mesh: &TriMesh<T>) -> String {
    let mut out = String::new();
    for p in mesh.positions() {
        writeln!(out, "v {} {} {}", p.x, p.y, p.z).unwrap();
    }
    for f in 0..mesh.face_count() {
        let [a, b, c] = mesh.face_vertices(f);
        writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1).unwrap();
    }
    out
}

pub fn write_mesh<T: Real>(path: &Path, mesh: &TriMesh<T>) -> Result<(), ParseError> {
    std::fs::write(path, write_mesh_string(mesh))?;
    Ok(())
}

/// Parses the strict OBJ subset and validates the mesh.
pub fn read_mesh_str<T: Real>(text: &str) -> Result<TriMesh<T>, ParseError> {
    let mut positions: Vec<Vector3<T>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();

    for (li, raw) in text.lines().enumerate() {
        let line_no = li + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }

        // Column of each whitespace-separated token (1-based).
        let tokens: Vec<(usize, &str)> = split_tokens(line);
        let (kw_col, keyword) = tokens[0];
        match keyword {
            "v" => {
                if tokens.len() != 4 {
                    return Err(syntax(
                        line_no,
                        kw_col,
                        format!("vertex record needs 3 coordinates, found {}", tokens.len() - 1),
                    ));
                }
                let mut coords = [T::zero(); 3];
                for (k, &(col, tok)) in tokens[1..].iter().enumerate() {
                    coords[k] = tok.parse::<T>().map_err(|_| {
                        syntax(line_no, col, format!("invalid coordinate `{tok}`"))
                    })?;
                }
                positions.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                if tokens.len() != 4 {
                    return Err(syntax(
                        line_no,
                        kw_col,
                        format!("face record needs 3 indices, found {}", tokens.len() - 1),
                    ));
                }
                let mut idx = [0usize; 3];
                for (k, &(col, tok)) in tokens[1..].iter().enumerate() {
                    if tok.contains('/') {
                        return Err(syntax(
                            line_no,
                            col,
                            "texture/normal index forms are not supported",
                        ));
                    }
                    let i: i64 = tok.parse().map_err(|_| {
                        syntax(line_no, col, format!("invalid face index `{tok}`"))
                    })?;
                    if i < 1 {
                        return Err(syntax(
                            line_no,
                            col,
                            format!("face index {i} out of range (1-based positive)"),
                        ));
                    }
                    idx[k] = (i - 1) as usize;
                }
                faces.push(idx);
            }
            other => {
                return Err(syntax(
                    line_no,
                    kw_col,
                    format!("unsupported record `{other}` (only `v` and `f`)"),
                ));
            }
        }
    }

    Ok(TriMesh::build_and_validate(positions, &faces)?)
}

pub fn read_mesh<T: Real>(path: &Path) -> Result<TriMesh<T>, ParseError> {
    let text = std::fs::read_to_string(path)?;
    read_mesh_str(&text)
}

/// Splits on ASCII whitespace, remembering each token's 1-based column.
fn split_tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    #[test]
    fn round_trip_is_byte_identical() {
        let m: TriMesh<f64> = icosphere(2, 1.0).unwrap();
        let once = write_mesh_string(&m);
        let back: TriMesh<f64> = read_mesh_str(&once).unwrap();
        let twice = write_mesh_string(&back);
        assert_eq!(once, twice);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# a tetrahedron\n\nv 1 1 1\nv 1 -1 -1\nv -1 1 -1\nv -1 -1 1 # inline comment\n\nf 1 2 3\nf 1 4 2\nf 1 3 4\nf 2 4 3\n";
        let m: TriMesh<f64> = read_mesh_str(text).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.face_count(), 4);
    }

    #[test]
    fn slash_forms_are_rejected_with_position() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n";
        match read_mesh_str::<f64>(text) {
            Err(ParseError::Syntax { line, column, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(column, 3);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn bad_float_is_rejected_with_position() {
        let text = "v 0 0 zero\n";
        match read_mesh_str::<f64>(text) {
            Err(ParseError::Syntax { line, column, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(column, 7);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keyword_is_rejected() {
        let text = "vn 0 0 1\n";
        assert!(matches!(
            read_mesh_str::<f64>(text),
            Err(ParseError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn open_mesh_reports_mesh_error() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        assert!(matches!(
            read_mesh_str::<f64>(text),
            Err(ParseError::Mesh(MeshError::OpenBoundary(..)))
        ));
    }
}
