//! Wavefront OBJ meshes: vertices and triangular faces only.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

pub fn load_obj(path: &Path) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

pub fn parse_obj(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut offset = 0usize;
    for (lineno, raw) in text.split_inclusive('\n').enumerate() {
        let at = offset;
        offset += raw.len();
        let err = |m: String| Error::parse(path, at as u64, format!("line {}: {m}", lineno + 1));
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let c: Vec<&str> = tokens.collect();
                if c.len() < 3 || c.len() > 4 {
                    return Err(err(format!("vertex needs 3 coordinates, found {}", c.len())));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad coordinate {s:?}")));
                let v = Vector3::new(num(c[0])?, num(c[1])?, num(c[2])?);
                if !v.iter().all(|x| x.is_finite()) {
                    return Err(err("non-finite coordinate".into()));
                }
                vertices.push(v);
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(err(format!("only triangles are supported, face has {} vertices", refs.len())));
                }
                let mut f = [0u32; 3];
                for (slot, r) in f.iter_mut().zip(&refs) {
                    let idx = r.split('/').next().unwrap_or("");
                    let i: i64 = idx.parse().map_err(|_| err(format!("bad vertex reference {r:?}")))?;
                    let n = vertices.len() as i64;
                    let resolved = if i > 0 { i - 1 } else { n + i };
                    if i == 0 || resolved < 0 || resolved >= n {
                        return Err(err(format!("vertex reference {i} out of range")));
                    }
                    *slot = resolved as u32;
                }
                if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                    return Err(err("face repeats a vertex".into()));
                }
                faces.push(f);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn save_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    std::fs::write(path, encode_obj(mesh)).map_err(|e| Error::io(path, e))
}

/// Coordinates are written in shortest round-trip form.
pub fn encode_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z).unwrap();
    }
    for f in &mesh.faces {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    s
}
