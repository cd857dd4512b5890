//! Georeferenced rasters, sliding-window tiling, patch fusion and Gaussian
//! smoothing.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// North-up affine pixel→world mapping. Row indices grow southwards, so
/// world `y` decreases by `pixel_size_y` per row.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Geotransform {
    /// World x of the west edge of column 0.
    pub origin_x: f64,
    /// World y of the north edge of row 0.
    pub origin_y: f64,
    pub pixel_size_x: f64,
    pub pixel_size_y: f64,
}

impl Geotransform {
    pub fn new(origin_x: f64, origin_y: f64, pixel_size_x: f64, pixel_size_y: f64) -> Result<Self> {
        let g = Self {
            origin_x,
            origin_y,
            pixel_size_x,
            pixel_size_y,
        };
        g.check()?;
        Ok(g)
    }

    /// Pixel `(row, col)` at world `(col, -row)`: one world unit per pixel.
    pub fn unit() -> Self {
        Self {
            origin_x: 0.0,
            origin_y: 0.0,
            pixel_size_x: 1.0,
            pixel_size_y: 1.0,
        }
    }

    pub fn check(&self) -> Result<()> {
        let finite = [self.origin_x, self.origin_y, self.pixel_size_x, self.pixel_size_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.pixel_size_x <= 0.0 || self.pixel_size_y <= 0.0 {
            return Err(Error::invalid("Geotransform", "pixel sizes must be finite and > 0"));
        }
        Ok(())
    }

    /// World coordinates of a pixel corner (`row`, `col` may equal the
    /// raster extent for the south/east edges).
    #[inline]
    pub fn corner(&self, row: f64, col: f64) -> (f64, f64) {
        (
            self.origin_x + col * self.pixel_size_x,
            self.origin_y - row * self.pixel_size_y,
        )
    }

    /// World coordinates of a pixel centre.
    #[inline]
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        self.corner(row as f64 + 0.5, col as f64 + 0.5)
    }

    /// Pixel containing a world point, as fractional `(row, col)`.
    #[inline]
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (self.origin_y - y) / self.pixel_size_y,
            (x - self.origin_x) / self.pixel_size_x,
        )
    }

    /// Lower-left corner, as written in ESRI ASCII headers.
    pub fn lower_left(&self, rows: usize) -> (f64, f64) {
        self.corner(rows as f64, 0.0)
    }

    pub fn from_lower_left(xll: f64, yll: f64, rows: usize, cellsize: f64) -> Result<Self> {
        Self::new(xll, yll + rows as f64 * cellsize, cellsize, cellsize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub grid: Grid,
    pub geo: Option<Geotransform>,
    pub nodata: Option<f64>,
}

impl Raster {
    pub fn new(grid: Grid) -> Result<Self> {
        grid.spatial("Raster")?;
        Ok(Self {
            grid,
            geo: None,
            nodata: None,
        })
    }

    pub fn with_geo(mut self, geo: Geotransform) -> Self {
        self.geo = Some(geo);
        self
    }

    pub fn with_nodata(mut self, nodata: Option<f64>) -> Self {
        self.nodata = nodata;
        self
    }

    pub fn height(&self) -> usize {
        self.grid.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.grid.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.grid.shape().get(2).copied().unwrap_or(1)
    }

    /// True for the nodata sentinel and for non-finite values.
    #[inline]
    pub fn is_nodata(&self, v: f64) -> bool {
        !v.is_finite() || self.nodata == Some(v)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.grid.data()[(row * self.width() + col) * self.channels()]
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.grid.data().iter().map(|&v| !self.is_nodata(v)).collect()
    }
}

/// Sliding-window layout: tile anchors `(row, col)` in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub tile: usize,
    pub overlap: usize,
    pub height: usize,
    pub width: usize,
    pub anchors: Vec<(usize, usize)>,
}

fn axis_anchors(extent: usize, tile: usize, stride: usize) -> Vec<usize> {
    if extent <= tile {
        return vec![0];
    }
    let last = extent - tile;
    let mut out: Vec<usize> = (0..).map(|i| i * stride).take_while(|&a| a < last).collect();
    out.push(last);
    out
}

/// Anchors step by `tile - overlap`; the final anchor on each axis is
/// clamped so the tile ends exactly at the border.
pub fn plan_tiles(h: usize, w: usize, tile: usize, overlap: usize) -> Result<TilePlan> {
    if tile <= overlap {
        return Err(Error::invalid("plan_tiles", "tile must exceed overlap"));
    }
    if h == 0 || w == 0 {
        return Err(Error::invalid("plan_tiles", "raster extents must be >= 1"));
    }
    let stride = tile - overlap;
    let rows = axis_anchors(h, tile, stride);
    let cols = axis_anchors(w, tile, stride);
    let anchors = rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect();
    Ok(TilePlan {
        tile,
        overlap,
        height: h,
        width: w,
        anchors,
    })
}

impl TilePlan {
    pub fn tile_height(&self) -> usize {
        self.tile.min(self.height)
    }

    pub fn tile_width(&self) -> usize {
        self.tile.min(self.width)
    }

    /// Window of a rank-2 or rank-3 grid at `anchor`.
    pub fn cut(&self, g: &Grid, anchor: (usize, usize)) -> Result<Grid> {
        let (h, w, c) = g.spatial("TilePlan::cut")?;
        if h != self.height || w != self.width {
            return Err(Error::shape("TilePlan::cut", g.shape(), &[self.height, self.width]));
        }
        let (th, tw) = (self.tile_height(), self.tile_width());
        let (r0, c0) = anchor;
        if r0 + th > h || c0 + tw > w {
            return Err(Error::invalid("TilePlan::cut", "tile exceeds raster"));
        }
        let mut data = Vec::with_capacity(th * tw * c);
        for r in r0..r0 + th {
            let start = (r * w + c0) * c;
            data.extend_from_slice(&g.data()[start..start + tw * c]);
        }
        let mut shape = vec![th, tw];
        if g.rank() == 3 {
            shape.push(c);
        }
        Grid::new(shape, data)
    }

    pub fn cut_all(&self, g: &Grid) -> Result<Vec<((usize, usize), Grid)>> {
        self.anchors.iter().map(|&a| Ok((a, self.cut(g, a)?))).collect()
    }
}

/// Uniform average of overlapping `rows×cols` patches. Patches are merged
/// in the order given using a running mean, so identical overlapping
/// values reproduce exactly.
pub fn fuse_patches(patches: &[((usize, usize), Grid)], h: usize, w: usize) -> Result<Raster> {
    let mut mean = vec![0.0; h * w];
    let mut count = vec![0u32; h * w];
    for ((r0, c0), patch) in patches {
        let (ph, pw) = patch.dims2("fuse_patches")?;
        if r0 + ph > h || c0 + pw > w {
            return Err(Error::invalid("fuse_patches", "patch exceeds raster bounds"));
        }
        for r in 0..ph {
            for c in 0..pw {
                let i = (r0 + r) * w + c0 + c;
                count[i] += 1;
                let v = patch.at2(r, c);
                // zero deltas are skipped so agreeing samples (signed zeros included) keep their bits
                if count[i] == 1 {
                    mean[i] = v;
                } else if v - mean[i] != 0.0 {
                    mean[i] += (v - mean[i]) / count[i] as f64;
                }
            }
        }
    }
    if let Some(i) = count.iter().position(|&n| n == 0) {
        return Err(Error::UncoveredPixel {
            row: i / w,
            col: i % w,
        });
    }
    Raster::new(Grid::new(vec![h, w], mean)?)
}

pub const DEFAULT_SIGMA: f64 = 2.0;

/// Normalised 1-D Gaussian taps with radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = libm::ceil(3.0 * sigma) as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| libm::exp(-((k * k) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

fn convolve_axis(src: &[f64], h: usize, w: usize, kernel: &[f64], along_rows: bool) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &g) in kernel.iter().enumerate() {
                let off = k as isize - r;
                let (sy, sx) = if along_rows {
                    (y as isize + off, x as isize)
                } else {
                    (y as isize, x as isize + off)
                };
                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                    continue;
                }
                acc += g * src[sy as usize * w + sx as usize];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Separable Gaussian smoothing as a normalised convolution: taps that fall
/// outside the raster or on nodata are dropped and the remaining weights
/// renormalised. Nodata pixels are kept as they are. Results are clamped to
/// the input's valid range so rounding cannot leave it.
pub fn gaussian_filter(r: &Raster, sigma: f64) -> Result<Raster> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("gaussian_filter", "sigma must be finite and >= 0"));
    }
    if sigma == 0.0 {
        return Ok(r.clone());
    }
    let (h, w, c) = r.grid.spatial("gaussian_filter")?;
    let kernel = gaussian_kernel(sigma);
    let mut out = r.grid.clone();
    for ch in 0..c {
        let values: Vec<f64> = (0..h * w).map(|p| r.grid.data()[p * c + ch]).collect();
        let valid: Vec<f64> = values.iter().map(|&v| if r.is_nodata(v) { 0.0 } else { 1.0 }).collect();
        let masked: Vec<f64> = values.iter().zip(&valid).map(|(&v, &m)| if m > 0.0 { v } else { 0.0 }).collect();
        let (lo, hi) = values
            .iter()
            .zip(&valid)
            .filter(|(_, &m)| m > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| (lo.min(v), hi.max(v)));
        let num = convolve_axis(&convolve_axis(&masked, h, w, &kernel, false), h, w, &kernel, true);
        let den = convolve_axis(&convolve_axis(&valid, h, w, &kernel, false), h, w, &kernel, true);
        let od = out.data_mut();
        for p in 0..h * w {
            if valid[p] > 0.0 {
                od[p * c + ch] = (num[p] / den[p]).clamp(lo, hi);
            }
        }
    }
    Ok(Raster {
        grid: out,
        geo: r.geo,
        nodata: r.nodata,
    })
}
