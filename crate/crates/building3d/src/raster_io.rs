use std::path::Path;

use building3d_core::Raster;
use image::ImageFormat;

use crate::asc::{read_asc, write_asc, AscOptions};
use crate::error::{Error, Result};
use crate::image_io::{read_image, write_image};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    Asc,
    Png,
    Pgm,
}

impl RasterFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("asc") => Ok(Self::Asc),
            Some("png") => Ok(Self::Png),
            Some("pgm") => Ok(Self::Pgm),
            _ => Err(Error::Unsupported(format!(
                "{}: unknown raster format (expected .asc, .png or .pgm)",
                path.display()
            ))),
        }
    }
}

pub fn read_raster(path: &Path, format: RasterFormat) -> Result<Raster> {
    match format {
        RasterFormat::Asc => read_asc(path),
        RasterFormat::Png => read_image(path, ImageFormat::Png),
        RasterFormat::Pgm => read_image(path, ImageFormat::Pnm),
    }
}

pub fn write_raster(r: &Raster, path: &Path, format: RasterFormat) -> Result<()> {
    match format {
        RasterFormat::Asc => write_asc(r, path, AscOptions::default()),
        RasterFormat::Png => write_image(r, path, ImageFormat::Png),
        RasterFormat::Pgm => write_image(r, path, ImageFormat::Pnm),
    }
}

/// Format picked from the file extension.
pub fn load_raster(path: &Path) -> Result<Raster> {
    read_raster(path, RasterFormat::from_path(path)?)
}

pub fn save_raster(r: &Raster, path: &Path) -> Result<()> {
    write_raster(r, path, RasterFormat::from_path(path)?)
}
