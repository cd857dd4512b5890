//! Model weights: a JSON manifest next to a raw little-endian `f64` buffer.
//!
//! ```json
//! {
//!   "format": "building3d-weights",
//!   "version": 1,
//!   "config": { "in_channels": 3, "encoder_widths": [8, 16], ... },
//!   "data": "model.bin",
//!   "tensors": [
//!     { "name": "encoder.conv1.weight", "shape": [3, 3, 3, 8], "dtype": "f64", "offset": 0 },
//!     ...
//!   ]
//! }
//! ```
//!
//! `data` is relative to the manifest. Tensors are row-major; `offset` is
//! in bytes.

use std::collections::HashMap;
use std::path::Path;

use building3d_core::sffde::{SffdeConfig, SffdeParams};
use building3d_core::Grid;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};

pub const FORMAT_TAG: &str = "building3d-weights";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config: SffdeConfig,
    pub data: String,
    pub tensors: Vec<TensorEntry>,
}

/// Manifest plus buffer for `p`; `data_name` is recorded as the buffer path.
pub fn encode_weights(p: &SffdeParams, data_name: &str) -> (Manifest, Vec<u8>) {
    let mut buf = Vec::new();
    let mut tensors = Vec::new();
    for (name, g) in p.tensors() {
        tensors.push(TensorEntry {
            name,
            shape: g.shape().to_vec(),
            dtype: "f64".into(),
            offset: buf.len() as u64,
        });
        for v in g.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        config: p.config.clone(),
        data: data_name.into(),
        tensors,
    };
    (manifest, buf)
}

pub fn decode_weights(m: &Manifest, buf: &[u8]) -> std::result::Result<SffdeParams, ParseError> {
    let bad = |reason: String| ParseError::new(0, reason);
    if m.format != FORMAT_TAG || m.version != FORMAT_VERSION {
        return Err(bad(format!("expected {FORMAT_TAG} v{FORMAT_VERSION}, got {} v{}", m.format, m.version)));
    }
    let expected: HashMap<String, Vec<usize>> = SffdeParams::init(&m.config, 0)
        .map_err(|e| bad(format!("config: {e}")))?
        .tensors()
        .into_iter()
        .map(|(name, g)| (name, g.shape().to_vec()))
        .collect();
    let mut table: HashMap<&str, Grid> = HashMap::new();
    for t in &m.tensors {
        if let Some(want) = expected.get(&t.name).filter(|w| **w != t.shape) {
            return Err(bad(format!("{}: shape {:?}, config implies {:?}", t.name, t.shape, want)));
        }
        if t.dtype != "f64" {
            return Err(bad(format!("{}: unsupported dtype `{}`", t.name, t.dtype)));
        }
        let n = t
            .shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| bad(format!("{}: shape overflows", t.name)))?;
        let start = usize::try_from(t.offset).map_err(|_| bad(format!("{}: offset too large", t.name)))?;
        let end = n
            .checked_mul(8)
            .and_then(|b| b.checked_add(start))
            .filter(|&e| e <= buf.len())
            .ok_or_else(|| bad(format!("{}: bytes {start}.. run past the {}-byte buffer", t.name, buf.len())))?;
        let data = buf[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let g = Grid::new(t.shape.clone(), data).map_err(|e| bad(e.to_string()))?;
        if table.insert(&t.name, g).is_some() {
            return Err(bad(format!("duplicate tensor `{}`", t.name)));
        }
    }
    let p = SffdeParams::from_tensors(&m.config, |name| table.remove(name)).map_err(|e| bad(e.to_string()))?;
    if let Some(extra) = table.keys().next() {
        return Err(bad(format!("unexpected tensor `{extra}`")));
    }
    Ok(p)
}

/// Writes `path` (manifest) and `path` with extension `.bin` (buffer).
pub fn save_weights(p: &SffdeParams, path: &Path) -> Result<()> {
    let bin = path.with_extension("bin");
    let name = bin
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Unsupported(format!("{}: weights path needs a UTF-8 file name", path.display())))?;
    let (manifest, buf) = encode_weights(p, name);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&bin, buf).map_err(|e| Error::io(&bin, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<SffdeParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let bin = path.parent().unwrap_or(Path::new("")).join(&manifest.data);
    let buf = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    decode_weights(&manifest, &buf).map_err(|e| Error::parse(&bin, e))
}
