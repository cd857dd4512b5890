//! Stanford PLY, ascii or binary little-endian.
//!
//! ```text
//! ply
//! format binary_little_endian 1.0
//! comment building3d
//! element vertex N
//! property double x
//! property double y
//! property double z
//! property uchar red        (only with colours)
//! property uchar green
//! property uchar blue
//! element face M            (only with faces)
//! property list uchar int vertex_indices
//! end_header
//! ```

use std::io::{BufRead, Write};

use building3d_core::recon::{Mesh, PointCloud};

use crate::error::ParseError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

impl PlyFormat {
    fn tag(self) -> &'static str {
        match self {
            Self::Ascii => "ascii",
            Self::BinaryLittleEndian => "binary_little_endian",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyData {
    pub vertices: Vec<[f64; 3]>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub faces: Vec<[u32; 3]>,
}

impl From<&PointCloud> for PlyData {
    fn from(pc: &PointCloud) -> Self {
        Self {
            vertices: pc.points.clone(),
            colors: pc.colors.clone(),
            faces: Vec::new(),
        }
    }
}

impl From<&Mesh> for PlyData {
    fn from(m: &Mesh) -> Self {
        Self {
            vertices: m.vertices.clone(),
            colors: None,
            faces: m.triangles.clone(),
        }
    }
}

pub fn write_ply(mut w: impl Write, d: &PlyData, format: PlyFormat) -> std::io::Result<()> {
    if let Some(c) = &d.colors {
        assert_eq!(c.len(), d.vertices.len(), "one colour per vertex");
    }
    writeln!(w, "ply\nformat {} 1.0\ncomment building3d", format.tag())?;
    writeln!(w, "element vertex {}", d.vertices.len())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if d.colors.is_some() {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    if !d.faces.is_empty() {
        writeln!(w, "element face {}\nproperty list uchar int vertex_indices", d.faces.len())?;
    }
    writeln!(w, "end_header")?;
    let color = |i: usize| d.colors.as_ref().map(|c| c[i]);
    match format {
        PlyFormat::Ascii => {
            for (i, p) in d.vertices.iter().enumerate() {
                write!(w, "{} {} {}", p[0], p[1], p[2])?;
                if let Some(c) = color(i) {
                    write!(w, " {} {} {}", c[0], c[1], c[2])?;
                }
                writeln!(w)?;
            }
            for f in &d.faces {
                writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for (i, p) in d.vertices.iter().enumerate() {
                for v in p {
                    w.write_all(&v.to_le_bytes())?;
                }
                if let Some(c) = color(i) {
                    w.write_all(&c)?;
                }
            }
            for f in &d.faces {
                w.write_all(&[3])?;
                for &v in f {
                    w.write_all(&(v as i32).to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Reads vertex positions (`x`, `y`, `z`), optional `red`/`green`/`blue`
/// and triangular `vertex_indices` faces; other properties are skipped.
pub fn read_ply(mut r: impl BufRead) -> Result<PlyData, ParseError> {
    let mut line_no = 0;
    let mut next_line = |r: &mut dyn BufRead| -> Result<String, ParseError> {
        let mut s = String::new();
        line_no += 1;
        match r.read_line(&mut s) {
            Ok(0) => Err(ParseError::new(line_no, "unexpected end of header")),
            Ok(_) => Ok(s.trim_end().to_string()),
            Err(e) => Err(ParseError::new(line_no, e.to_string())),
        }
    };
    if next_line(&mut r)? != "ply" {
        return Err(ParseError::new(1, "missing `ply` magic"));
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut header_lines = 1;
    loop {
        let line = next_line(&mut r)?;
        header_lines += 1;
        let no = header_lines;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(ParseError::new(no, format!("unsupported format `{other}`"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| ParseError::new(no, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let (ct, it) = Scalar::parse(ct)
                    .zip(Scalar::parse(it))
                    .ok_or_else(|| ParseError::new(no, "bad list types"))?;
                let e = elements.last_mut().ok_or_else(|| ParseError::new(no, "property before element"))?;
                e.props.push(Property::List(name.to_string(), ct, it));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| ParseError::new(no, format!("unknown type `{ty}`")))?;
                let e = elements.last_mut().ok_or_else(|| ParseError::new(no, "property before element"))?;
                e.props.push(Property::Scalar(name.to_string(), ty));
            }
            _ => return Err(ParseError::new(no, format!("unrecognised header line `{line}`"))),
        }
    }
    let binary = binary.ok_or_else(|| ParseError::new(header_lines, "header has no format line"))?;

    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(|e| ParseError::new(header_lines, e.to_string()))?;
    let mut src = Source::new(&body, binary, header_lines);
    let mut out = PlyData::default();
    for e in &elements {
        let has = |n: &str| e.props.iter().any(|p| matches!(p, Property::Scalar(m, _) if m == n));
        let colored = e.name == "vertex" && has("red") && has("green") && has("blue");
        if colored {
            out.colors = Some(Vec::with_capacity(e.count));
        }
        for _ in 0..e.count {
            let mut xyz = [0.0; 3];
            let mut rgb = [0u8; 3];
            for p in &e.props {
                match p {
                    Property::Scalar(name, ty) => {
                        let v = src.scalar(*ty)?;
                        if e.name == "vertex" {
                            match name.as_str() {
                                "x" => xyz[0] = v,
                                "y" => xyz[1] = v,
                                "z" => xyz[2] = v,
                                "red" => rgb[0] = v as u8,
                                "green" => rgb[1] = v as u8,
                                "blue" => rgb[2] = v as u8,
                                _ => {}
                            }
                        }
                    }
                    Property::List(name, ct, it) => {
                        let n = src.scalar(*ct)? as usize;
                        let items = (0..n).map(|_| src.scalar(*it)).collect::<Result<Vec<f64>, _>>()?;
                        if e.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            if n != 3 {
                                return Err(src.error(format!("face with {n} vertices; only triangles are supported")));
                            }
                            out.faces.push([items[0] as u32, items[1] as u32, items[2] as u32]);
                        }
                    }
                }
            }
            if e.name == "vertex" {
                out.vertices.push(xyz);
                if let Some(c) = out.colors.as_mut() {
                    c.push(rgb);
                }
            }
            src.end_record()?;
        }
    }
    if let Some(&i) = out.faces.iter().flatten().find(|&&i| i as usize >= out.vertices.len()) {
        return Err(src.error(format!("face index {i} out of range")));
    }
    Ok(out)
}

struct Source<'a> {
    body: &'a [u8],
    pos: usize,
    binary: bool,
    line: usize,
    tokens: std::vec::IntoIter<&'a str>,
}

impl<'a> Source<'a> {
    fn new(body: &'a [u8], binary: bool, header_lines: usize) -> Self {
        Self {
            body,
            pos: 0,
            binary,
            line: header_lines,
            tokens: Vec::new().into_iter(),
        }
    }

    fn error(&self, reason: String) -> ParseError {
        ParseError::new(if self.binary { 0 } else { self.line }, reason)
    }

    fn scalar(&mut self, ty: Scalar) -> Result<f64, ParseError> {
        if self.binary {
            let end = self.pos + ty.size();
            let b = self
                .body
                .get(self.pos..end)
                .ok_or_else(|| self.error(format!("payload truncated at byte {}", self.pos)))?;
            self.pos = end;
            return Ok(ty.decode_le(b));
        }
        loop {
            if let Some(t) = self.tokens.next() {
                return t.parse().map_err(|_| self.error(format!("cannot parse `{t}`")));
            }
            let rest = &self.body[self.pos..];
            if rest.is_empty() {
                return Err(self.error("unexpected end of data".into()));
            }
            let len = rest.iter().position(|&b| b == b'\n').map_or(rest.len(), |i| i + 1);
            let text = std::str::from_utf8(&rest[..len]).map_err(|_| self.error("invalid UTF-8".into()))?;
            self.pos += len;
            self.line += 1;
            self.tokens = text.split_whitespace().collect::<Vec<_>>().into_iter();
        }
    }

    fn end_record(&mut self) -> Result<(), ParseError> {
        if !self.binary && self.tokens.next().is_some() {
            return Err(self.error("extra values on record".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PlyData {
        PlyData {
            vertices: vec![[0.5, -1.25, 3.0], [1e6 + 0.1, 2.0, 0.0], [7.0, 8.0, 9.0]],
            colors: Some(vec![[1, 2, 3], [255, 0, 128], [9, 9, 9]]),
            faces: vec![[0, 1, 2]],
        }
    }

    #[test]
    fn round_trip_both_formats() {
        for f in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let mut buf = Vec::new();
            write_ply(&mut buf, &sample(), f).unwrap();
            assert_eq!(read_ply(&buf[..]).unwrap(), sample());
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        let d = PlyData {
            colors: None,
            faces: vec![],
            ..sample()
        };
        write_ply(&mut buf, &d, PlyFormat::Ascii).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "ply\nformat ascii 1.0\ncomment building3d\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\nend_header\n0.5 -1.25 3\n"
        ));
    }

    #[test]
    fn truncated_binary() {
        let mut buf = Vec::new();
        write_ply(&mut buf, &sample(), PlyFormat::BinaryLittleEndian).unwrap();
        buf.truncate(buf.len() - 2);
        assert!(read_ply(&buf[..]).unwrap_err().reason.contains("truncated"));
    }
}
