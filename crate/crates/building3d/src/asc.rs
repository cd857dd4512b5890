//! ESRI ASCII grid.
//!
//! ```text
//! ncols         4
//! nrows         2
//! xllcorner     1000
//! yllcorner     2000
//! cellsize      0.5
//! NODATA_value  -9999
//! 1 2 3 4
//! 5 6 7 8
//! ```
//!
//! Rows run north to south. `xllcenter`/`yllcenter` are accepted on read.
//! Values are written in shortest round-trip form unless a number of
//! significant digits is requested.

use std::fmt::Write as _;
use std::path::Path;

use building3d_core::{Geotransform, Grid, Raster};

use crate::error::{Error, ParseError, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Upper bound on `ncols * nrows` accepted by the reader.
pub const MAX_CELLS: usize = 1 << 28;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AscOptions {
    /// `None` writes every value losslessly.
    pub significant_digits: Option<usize>,
}

#[derive(Default)]
struct Header {
    ncols: Option<usize>,
    nrows: Option<usize>,
    xll: Option<(f64, bool)>,
    yll: Option<(f64, bool)>,
    cellsize: Option<f64>,
    nodata: Option<f64>,
}

fn number<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> std::result::Result<T, ParseError> {
    v.parse()
        .map_err(|_| ParseError::new(line, format!("{key}: cannot parse `{v}`")))
}

pub fn parse_asc(text: &str) -> std::result::Result<Raster, ParseError> {
    let mut header = Header::default();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
    while let Some(&(no, line)) = lines.peek() {
        let mut tok = line.split_whitespace();
        let Some(key) = tok.next() else {
            lines.next();
            continue;
        };
        if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        let value = tok
            .next()
            .ok_or_else(|| ParseError::new(no, format!("{key}: missing value")))?;
        if tok.next().is_some() {
            return Err(ParseError::new(no, format!("{key}: trailing tokens")));
        }
        match key.to_ascii_lowercase().as_str() {
            "ncols" => header.ncols = Some(number(no, key, value)?),
            "nrows" => header.nrows = Some(number(no, key, value)?),
            "xllcorner" => header.xll = Some((number(no, key, value)?, false)),
            "xllcenter" => header.xll = Some((number(no, key, value)?, true)),
            "yllcorner" => header.yll = Some((number(no, key, value)?, false)),
            "yllcenter" => header.yll = Some((number(no, key, value)?, true)),
            "cellsize" => header.cellsize = Some(number(no, key, value)?),
            "nodata_value" => header.nodata = Some(number(no, key, value)?),
            _ => return Err(ParseError::new(no, format!("unknown header key `{key}`"))),
        }
        lines.next();
    }
    let first_data = lines.peek().map_or(text.lines().count() + 1, |&(no, _)| no);
    let missing = |k: &str| ParseError::new(first_data, format!("header is missing `{k}`"));
    let ncols = header.ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = header.nrows.ok_or_else(|| missing("nrows"))?;
    let (xll, xc) = header.xll.ok_or_else(|| missing("xllcorner"))?;
    let (yll, yc) = header.yll.ok_or_else(|| missing("yllcorner"))?;
    let cellsize = header.cellsize.ok_or_else(|| missing("cellsize"))?;
    if ncols == 0 || nrows == 0 {
        return Err(ParseError::new(first_data, "ncols and nrows must be >= 1"));
    }
    let cells = ncols
        .checked_mul(nrows)
        .filter(|&n| n <= MAX_CELLS)
        .ok_or_else(|| ParseError::new(first_data, format!("{ncols}x{nrows} exceeds {MAX_CELLS} cells")))?;
    let half = 0.5 * cellsize;
    let xll = if xc { xll - half } else { xll };
    let yll = if yc { yll - half } else { yll };
    let geo = Geotransform::from_lower_left(xll, yll, nrows, cellsize)
        .map_err(|e| ParseError::new(first_data, e.to_string()))?;

    let mut data = Vec::with_capacity(cells);
    let mut row_lengths = Vec::new();
    for (no, line) in lines {
        let before = data.len();
        for t in line.split_whitespace() {
            if data.len() == cells {
                return Err(ParseError::new(
                    no,
                    format!("more than ncols*nrows = {ncols}*{nrows} = {cells} values"),
                ));
            }
            data.push(number::<f64>(no, "value", t)?);
        }
        if data.len() > before {
            row_lengths.push((no, data.len() - before));
        }
    }
    if data.len() != cells {
        // point at the first row of the wrong width when rows are one per line
        let bad = row_lengths.iter().find(|&&(_, n)| n != ncols);
        let (no, reason) = match bad {
            Some(&(no, n)) => (no, format!("row has {n} values, ncols is {ncols}")),
            None => (first_data, String::new()),
        };
        let reason = format!(
            "expected ncols*nrows = {ncols}*{nrows} = {cells} values, found {}{}{}",
            data.len(),
            if reason.is_empty() { "" } else { "; " },
            reason
        );
        return Err(ParseError::new(no, reason));
    }
    let grid = Grid::new(vec![nrows, ncols], data).map_err(|e| ParseError::new(first_data, e.to_string()))?;
    Ok(Raster::new(grid)
        .map_err(|e| ParseError::new(first_data, e.to_string()))?
        .with_geo(geo)
        .with_nodata(header.nodata))
}

fn push_value(out: &mut String, v: f64, opts: AscOptions) {
    match opts.significant_digits {
        None => write!(out, "{v}"),
        Some(d) => write!(out, "{:.*e}", d.max(1) - 1, v),
    }
    .expect("writing to a String");
}

/// Rank-2 rasters only. Missing geotransforms are written as the unit
/// transform; non-square pixels are rejected. Non-finite values become the
/// nodata sentinel.
pub fn format_asc(r: &Raster, opts: AscOptions) -> Result<String> {
    let (h, w) = r.grid.dims2("format_asc")?;
    let geo = r.geo.unwrap_or_else(Geotransform::unit);
    if geo.pixel_size_x != geo.pixel_size_y {
        return Err(Error::Unsupported(format!(
            ".asc needs square pixels, got {} x {}",
            geo.pixel_size_x, geo.pixel_size_y
        )));
    }
    let has_gaps = r.grid.data().iter().any(|v| !v.is_finite());
    let nodata = r.nodata.or(has_gaps.then_some(DEFAULT_NODATA));
    let (xll, yll) = geo.lower_left(h);
    let mut out = String::with_capacity(64 * 6 + h * w * 8);
    let mut kv = |k: &str, v: &dyn std::fmt::Display| writeln!(out, "{k:<14}{v}").expect("writing to a String");
    kv("ncols", &w);
    kv("nrows", &h);
    kv("xllcorner", &xll);
    kv("yllcorner", &yll);
    kv("cellsize", &geo.pixel_size_x);
    if let Some(nd) = nodata {
        kv("NODATA_value", &nd);
    }
    for row in 0..h {
        for (c, &v) in r.grid.row(row).iter().enumerate() {
            if c > 0 {
                out.push(' ');
            }
            let v = if v.is_finite() { v } else { nodata.expect("set when gaps exist") };
            push_value(&mut out, v, opts);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn read_asc(path: &Path) -> Result<Raster> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_asc(&text).map_err(|e| Error::parse(path, e))
}

pub fn write_asc(r: &Raster, path: &Path, opts: AscOptions) -> Result<()> {
    let text = format_asc(r, opts)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
