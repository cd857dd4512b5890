//! PNG and PGM rasters.
//!
//! 8-bit samples are read as raw 0–255 values, gray or RGB (alpha is
//! dropped). 16-bit gray samples map through an optional JSON sidecar at
//! `<path>.json`: `value = stored * scale + offset`, with `stored ==
//! nodata` marking gaps. Without a sidecar 16-bit samples are read raw.

use std::path::{Path, PathBuf};

use building3d_core::{Grid, Raster};
use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub scale: f64,
    pub offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodata: Option<u16>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let side = sidecar_path(path);
    match std::fs::read_to_string(&side) {
        Ok(text) => {
            let s: Sidecar = serde_json::from_str(&text).map_err(|e| Error::json(&side, e))?;
            if !(s.scale.is_finite() && s.offset.is_finite()) {
                return Err(Error::Unsupported(format!("{}: scale and offset must be finite", side.display())));
            }
            Ok(Some(s))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(&side, e)),
    }
}

fn image_err(path: &Path, source: image::ImageError) -> Error {
    match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.display().to_string(),
            source,
        },
    }
}

pub fn read_image(path: &Path, format: ImageFormat) -> Result<Raster> {
    let mut reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    reader.set_format(format);
    let img = reader.decode().map_err(|e| image_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raster = match img {
        DynamicImage::ImageLuma8(b) => Raster::new(Grid::new(vec![h, w], b.into_raw().into_iter().map(f64::from).collect())?)?,
        DynamicImage::ImageLuma16(b) => {
            let side = read_sidecar(path)?;
            let decode = |s: u16| match side {
                Some(sc) if sc.nodata == Some(s) => f64::NAN,
                Some(sc) => s as f64 * sc.scale + sc.offset,
                None => s as f64,
            };
            let data = b.into_raw().into_iter().map(decode).collect();
            Raster::new(Grid::new(vec![h, w], data)?)?
        }
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            let b = img.to_luma8();
            Raster::new(Grid::new(vec![h, w], b.into_raw().into_iter().map(f64::from).collect())?)?
        }
        other => {
            let b = other.to_rgb8();
            Raster::new(Grid::new(vec![h, w, 3], b.into_raw().into_iter().map(f64::from).collect())?)?
        }
    };
    Ok(raster)
}

fn is_byte(v: f64) -> bool {
    v.is_finite() && v == v.round() && (0.0..=255.0).contains(&v)
}

/// Stored encoding for a single-channel raster: 8-bit when every value is
/// an integer in 0–255, otherwise 16-bit with a sidecar spanning the
/// finite range (0 reserved for nodata when gaps exist).
fn encode_gray(r: &Raster) -> (DynamicImage, Option<Sidecar>) {
    let (h, w) = (r.height() as u32, r.width() as u32);
    let data = r.grid.data();
    if r.nodata.is_none() && data.iter().all(|&v| is_byte(v)) {
        let bytes = data.iter().map(|&v| v as u8).collect();
        return (DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).expect("sized")), None);
    }
    let valid: Vec<f64> = data.iter().copied().filter(|&v| !r.is_nodata(v)).collect();
    let gaps = valid.len() < data.len();
    let (lo, hi) = valid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (first, levels) = if gaps { (1.0, 65534.0) } else { (0.0, 65535.0) };
    let scale = if hi > lo { (hi - lo) / levels } else { 1.0 };
    let lo = if lo.is_finite() { lo } else { 0.0 };
    let offset = lo - first * scale;
    let words = data
        .iter()
        .map(|&v| {
            if r.is_nodata(v) {
                0
            } else {
                ((v - offset) / scale).round().clamp(first, 65535.0) as u16
            }
        })
        .collect();
    let side = Sidecar {
        scale,
        offset,
        nodata: gaps.then_some(0),
    };
    (
        DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, words).expect("sized")),
        Some(side),
    )
}

/// Rank-3 rasters with three channels are written as 8-bit RGB (values
/// rounded and clamped to 0–255); rank-2 rasters as 8-bit gray when
/// lossless, else 16-bit gray with a sidecar.
pub fn write_image(r: &Raster, path: &Path, format: ImageFormat) -> Result<()> {
    let (h, w) = (r.height() as u32, r.width() as u32);
    let (img, side) = match (r.grid.rank(), r.channels()) {
        (2, _) => encode_gray(r),
        (3, 3) => {
            let bytes = r.grid.data().iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
            (DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).expect("sized")), None)
        }
        (_, c) => return Err(Error::Unsupported(format!("{}: cannot store {c} channels", path.display()))),
    };
    img.save_with_format(path, format).map_err(|e| image_err(path, e))?;
    let side_path = sidecar_path(path);
    match side {
        Some(s) => {
            let text = serde_json::to_string_pretty(&s).expect("plain struct");
            std::fs::write(&side_path, text + "\n").map_err(|e| Error::io(&side_path, e))?;
        }
        None => match std::fs::remove_file(&side_path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(Error::io(&side_path, e)),
            _ => {}
        },
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_gray_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let r = Raster::new(Grid::new(vec![2, 3], vec![0.0, 255.0, 7.0, 1.0, 0.0, 128.0]).unwrap()).unwrap();
        write_image(&r, &p, ImageFormat::Png).unwrap();
        assert!(!sidecar_path(&p).exists());
        assert_eq!(read_image(&p, ImageFormat::Png).unwrap().grid, r.grid);
    }

    #[test]
    fn sixteen_bit_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        for fmt in [ImageFormat::Png, ImageFormat::Pnm] {
            let p = dir.path().join(if fmt == ImageFormat::Png { "e.png" } else { "e.pgm" });
            let vals = vec![3.25, 17.5, -2.0, 40.125];
            let r = Raster::new(Grid::new(vec![2, 2], vals.clone()).unwrap()).unwrap();
            write_image(&r, &p, fmt).unwrap();
            let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&p)).unwrap()).unwrap();
            let back = read_image(&p, fmt).unwrap();
            for (a, b) in back.grid.data().iter().zip(&vals) {
                assert!((a - b).abs() <= 0.5 * side.scale + 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn sixteen_bit_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        let r = Raster::new(Grid::new(vec![1, 3], vec![1.5, f64::NAN, 2.5]).unwrap()).unwrap();
        write_image(&r, &p, ImageFormat::Png).unwrap();
        let back = read_image(&p, ImageFormat::Png).unwrap();
        assert!(back.grid.data()[1].is_nan());
        assert!((back.grid.data()[0] - 1.5).abs() < 1e-4);
        assert!((back.grid.data()[2] - 2.5).abs() < 1e-4);
    }

    #[test]
    fn rgb_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.png");
        let r = Raster::new(Grid::from_fn3(2, 2, 3, |y, x, c| (y * 100 + x * 10 + c) as f64)).unwrap();
        write_image(&r, &p, ImageFormat::Png).unwrap();
        assert_eq!(read_image(&p, ImageFormat::Png).unwrap().grid, r.grid);
    }
}
