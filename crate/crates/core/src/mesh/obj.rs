//! ASCII Wavefront OBJ reader. Only `v` and `f` records are used; polygons
//! are fan-triangulated and other records are ignored.

use std::path::Path;

use super::{Mesh, Vec3};
use crate::error::{Error, Result};

pub fn load_obj(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

/// Parses OBJ text; `path` only labels diagnostics. The result is
/// normalized to the unit cube.
pub fn parse_obj(text: &str, path: &Path) -> Result<Mesh> {
    let err = |line: usize, message: String| Error::Obj {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut tokens = raw.split('#').next().unwrap_or("").split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|e| err(line, format!("bad coordinate {t:?}: {e}")))
                    })
                    .collect::<Result<_>>()?;
                if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                    return Err(err(line, "vertex needs three finite coordinates".into()));
                }
                vertices.push([coords[0], coords[1], coords[2]]);
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in tokens {
                    let head = t.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| err(line, format!("bad face index {t:?}")))?;
                    let resolved = match idx {
                        0 => None,
                        i if i > 0 => Some(i as usize - 1),
                        i => (vertices.len() as i64 + i).try_into().ok(),
                    };
                    match resolved {
                        Some(v) if v < vertices.len() => poly.push(v),
                        _ => {
                            return Err(err(
                                line,
                                format!(
                                    "face index {idx} out of range for {} vertices",
                                    vertices.len()
                                ),
                            ))
                        }
                    }
                }
                if poly.len() < 3 {
                    return Err(err(
                        line,
                        format!("face has {} vertices, need at least 3", poly.len()),
                    ));
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err(err(text.lines().count(), "no faces".into()));
    }
    Mesh::new(vertices, faces)
        .map(Mesh::normalized)
        .map_err(|e| err(0, e.to_string()))
}
