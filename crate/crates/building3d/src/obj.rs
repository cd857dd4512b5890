//! Wavefront OBJ: `v x y z` lines then 1-based `f a b c` triangles.

use std::io::{BufRead, Write};

use building3d_core::recon::Mesh;

use crate::error::ParseError;

pub fn write_obj(mut w: impl Write, m: &Mesh) -> std::io::Result<()> {
    writeln!(w, "# building3d mesh: {} vertices, {} triangles", m.vertices.len(), m.triangles.len())?;
    for v in &m.vertices {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for t in &m.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

/// Vertices and triangular faces; `f` entries may carry `/vt/vn`
/// suffixes, which are ignored. Negative (relative) indices are resolved.
pub fn read_obj(r: impl BufRead) -> Result<Mesh, ParseError> {
    let mut m = Mesh::default();
    for (i, line) in r.lines().enumerate() {
        let no = i + 1;
        let line = line.map_err(|e| ParseError::new(no, e.to_string()))?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let xyz: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse().map_err(|_| ParseError::new(no, format!("bad coordinate `{t}`"))))
                    .collect::<Result<_, _>>()?;
                if xyz.len() != 3 {
                    return Err(ParseError::new(no, "vertex needs three coordinates"));
                }
                m.vertices.push([xyz[0], xyz[1], xyz[2]]);
            }
            Some("f") => {
                let n = m.vertices.len() as i64;
                let idx: Vec<u32> = tok
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let k: i64 = head.parse().map_err(|_| ParseError::new(no, format!("bad index `{t}`")))?;
                        let k = if k < 0 { n + k } else { k - 1 };
                        if k < 0 || k >= n {
                            return Err(ParseError::new(no, format!("index `{t}` out of range")));
                        }
                        Ok(k as u32)
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() != 3 {
                    return Err(ParseError::new(no, format!("face with {} vertices; only triangles are supported", idx.len())));
                }
                m.triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Ok(m)
}
