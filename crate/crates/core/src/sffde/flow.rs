//! Flow-guided registration of a low-resolution global feature onto a
//! high-resolution local feature.
//!
//! The flow field predicts, for every high-resolution pixel, where in the
//! upsampled low-resolution feature its semantics should be read from.
//! Sampling uses the bilinear kernel `max(0, 1-|Δ|)` per axis, and taps
//! that fall outside the map contribute zero.

use alloc::vec;

use crate::error::{Error, Result};
use crate::grid::{bilinear_resize, concat_channels, conv2d, Grid, KernelSpec, Shape2D};

/// Per-pixel displacement in pixels: channel 0 is Δx (columns), channel 1
/// is Δy (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    s: Grid,
}

impl FlowField {
    pub fn new(s: Grid) -> Result<Self> {
        let (_, _, c) = s.dims3("FlowField")?;
        if c != 2 {
            return Err(Error::invalid("FlowField", "flow needs exactly 2 channels"));
        }
        if !s.all_finite() {
            return Err(Error::invalid("FlowField", "non-finite displacement"));
        }
        Ok(Self { s })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            s: Grid::zeros(&[h, w, 2]),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.s
    }

    pub fn into_grid(self) -> Grid {
        self.s
    }

    pub fn height(&self) -> usize {
        self.s.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.s.shape()[1]
    }

    #[inline]
    pub fn dx(&self, y: usize, x: usize) -> f64 {
        self.s.at3(y, x, 0)
    }

    #[inline]
    pub fn dy(&self, y: usize, x: usize) -> f64 {
        self.s.at3(y, x, 1)
    }
}

/// Integer pixel coordinates `(x, y)` of a high-resolution map.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelLattice {
    coords: Grid,
}

impl PixelLattice {
    pub fn new(h: usize, w: usize) -> Self {
        Self {
            coords: Grid::from_fn3(h, w, 2, |y, x, c| if c == 0 { x as f64 } else { y as f64 }),
        }
    }

    pub fn coords(&self) -> &Grid {
        &self.coords
    }

    /// Sampling positions after displacement by `s`.
    pub fn offset(&self, s: &FlowField) -> Result<Grid> {
        self.coords.add(s.grid())
    }
}

/// One axis of the bilinear kernel at a continuous coordinate: the two
/// candidate taps and their weights. The lower tap is `ceil(p) - 1`, so at
/// an integer position the full weight sits on the upper tap.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AxisTaps {
    pub lo: isize,
    pub w_lo: f64,
    pub w_hi: f64,
}

impl AxisTaps {
    #[inline]
    pub fn at(p: f64) -> Self {
        let lo = libm::ceil(p) - 1.0;
        let frac = p - lo;
        Self {
            lo: lo as isize,
            w_lo: 1.0 - frac,
            w_hi: frac,
        }
    }
}

#[inline]
pub(crate) fn in_range(i: isize, n: usize) -> bool {
    i >= 0 && (i as usize) < n
}

/// Bilinear sampling of an `H×W×D` map at the displaced lattice.
pub fn sample_displaced(src: &Grid, s: &FlowField) -> Result<Grid> {
    let (h, w, d) = src.dims3("warp")?;
    if s.height() != h || s.width() != w {
        return Err(Error::shape("warp", src.shape(), s.grid().shape()));
    }
    let positions = PixelLattice::new(h, w).offset(s)?;
    let mut out = Grid::zeros(&[h, w, d]);
    let sd = src.data();
    let od = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let tx = AxisTaps::at(positions.at3(y, x, 0));
            let ty = AxisTaps::at(positions.at3(y, x, 1));
            let obase = (y * w + x) * d;
            for (row, wy) in [(ty.lo, ty.w_lo), (ty.lo + 1, ty.w_hi)] {
                if wy == 0.0 || !in_range(row, h) {
                    continue;
                }
                for (col, wx) in [(tx.lo, tx.w_lo), (tx.lo + 1, tx.w_hi)] {
                    if wx == 0.0 || !in_range(col, w) {
                        continue;
                    }
                    let wt = wy * wx;
                    let sbase = (row as usize * w + col as usize) * d;
                    for c in 0..d {
                        od[obase + c] += wt * sd[sbase + c];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Upsample `f_l` to `out` and read it at the displaced lattice.
pub fn warp(f_l: &Grid, s: &FlowField, out: Shape2D) -> Result<Grid> {
    if s.height() != out.height || s.width() != out.width {
        return Err(Error::shape(
            "warp",
            &[out.height, out.width],
            s.grid().shape(),
        ));
    }
    sample_displaced(&bilinear_resize(f_l, out)?, s)
}

/// Weights of the registration block.
#[derive(Debug, Clone, PartialEq)]
pub struct L2gParams {
    /// 1×1, high-resolution channels -> D.
    pub map_high: KernelSpec,
    /// 1×1, low-resolution channels -> D.
    pub map_low: KernelSpec,
    /// 3×3, 2D -> 2 (flow prediction over `[up(low), high]`).
    pub flow: KernelSpec,
}

impl L2gParams {
    pub fn dim(&self) -> usize {
        self.map_high.dims().3
    }

    pub fn check(&self) -> Result<()> {
        for k in [&self.map_high, &self.map_low, &self.flow] {
            k.check()?;
        }
        let d = self.dim();
        if self.map_high.dims().0 != 1 || self.map_low.dims().0 != 1 {
            return Err(Error::invalid("L2gParams", "channel mappings must be 1×1"));
        }
        if self.map_low.dims().3 != d {
            return Err(Error::shape("L2gParams", self.map_high.weights.shape(), self.map_low.weights.shape()));
        }
        let (_, _, fin, fout) = self.flow.dims();
        if fin != 2 * d || fout != 2 {
            return Err(Error::shape("L2gParams", &[2 * d, 2], &[fin, fout]));
        }
        Ok(())
    }
}

/// Every intermediate of one registration pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct L2gTrace {
    pub high_mapped: Grid,
    pub low_mapped: Grid,
    pub low_up: Grid,
    pub fused: Grid,
    pub flow: FlowField,
    pub registered: Grid,
    pub out: Grid,
}

fn check_resolutions(f_h: &Grid, f_l: &Grid) -> Result<Shape2D> {
    let (hh, wh, ch) = f_h.dims3("l2g")?;
    let (hl, wl, _) = f_l.dims3("l2g")?;
    if hh < hl || wh < wl {
        return Err(Error::shape("l2g", f_h.shape(), f_l.shape()));
    }
    Shape2D::new(hh, wh, ch)
}

pub fn l2g_forward(f_h: &Grid, f_l: &Grid, p: &L2gParams) -> Result<L2gTrace> {
    p.check()?;
    let shape = check_resolutions(f_h, f_l)?;
    let high_mapped = conv2d(f_h, &p.map_high)?;
    let low_mapped = conv2d(f_l, &p.map_low)?;
    let low_up = bilinear_resize(&low_mapped, shape)?;
    let fused = concat_channels(&low_up, &high_mapped)?;
    let flow = FlowField::new(conv2d(&fused, &p.flow)?)?;
    let registered = sample_displaced(&low_up, &flow)?;
    let out = registered.add(&high_mapped)?;
    Ok(L2gTrace {
        high_mapped,
        low_mapped,
        low_up,
        fused,
        flow,
        registered,
        out,
    })
}

/// Flow field predicted from the two resolutions.
pub fn gen_flow(f_h: &Grid, f_l: &Grid, p: &L2gParams) -> Result<FlowField> {
    p.check()?;
    let shape = check_resolutions(f_h, f_l)?;
    let high = conv2d(f_h, &p.map_high)?;
    let low = bilinear_resize(&conv2d(f_l, &p.map_low)?, shape)?;
    FlowField::new(conv2d(&concat_channels(&low, &high)?, &p.flow)?)
}

/// Registered low-resolution feature aggregated with the mapped
/// high-resolution feature by element-wise addition.
pub fn l2g_register(f_h: &Grid, f_l: &Grid, p: &L2gParams) -> Result<Grid> {
    Ok(l2g_forward(f_h, f_l, p)?.out)
}

/// Zero-initialised flow head: registration starts as plain upsampling.
pub fn zero_flow_kernel(d: usize) -> KernelSpec {
    KernelSpec {
        weights: Grid::zeros(&[3, 3, 2 * d, 2]),
        bias: vec![0.0; 2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn params(ch: usize, cl: usize, d: usize, seed: f64) -> L2gParams {
        let g = |shape: &[usize], k: f64| {
            let n: usize = shape.iter().product();
            Grid::new(shape.to_vec(), (0..n).map(|i| libm::sin(i as f64 * k + seed) * 0.4).collect()).unwrap()
        };
        L2gParams {
            map_high: KernelSpec::new(g(&[1, 1, ch, d], 1.3), vec![0.1; d]).unwrap(),
            map_low: KernelSpec::new(g(&[1, 1, cl, d], 0.7), vec![-0.05; d]).unwrap(),
            flow: KernelSpec::new(g(&[3, 3, 2 * d, 2], 0.31), vec![0.2, -0.3]).unwrap(),
        }
    }

    #[test]
    fn lattice_matches_indices() {
        let l = PixelLattice::new(3, 4);
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(l.coords().at3(y, x, 0), x as f64);
                assert_eq!(l.coords().at3(y, x, 1), y as f64);
            }
        }
    }

    #[test]
    fn zero_flow_is_upsampling() {
        let f = Grid::from_fn3(3, 2, 2, |y, x, c| (y * 5 + x * 2 + c) as f64 * 0.3);
        let out = Shape2D::new(5, 7, 2).unwrap();
        let w = warp(&f, &FlowField::zeros(5, 7), out).unwrap();
        assert_eq!(w, bilinear_resize(&f, out).unwrap());
    }

    #[test]
    fn unit_shift_reads_neighbour_or_zero() {
        let row = Grid::new(alloc::vec![1, 2, 1], alloc::vec![5.0, 7.0]).unwrap();
        let s = FlowField::new(Grid::from_fn3(1, 2, 2, |_, _, c| if c == 0 { 1.0 } else { 0.0 })).unwrap();
        let w = warp(&row, &s, Shape2D::new(1, 2, 1).unwrap()).unwrap();
        assert_eq!(w.data(), &[7.0, 0.0]);
    }

    #[test]
    fn constant_stays_constant_in_range() {
        let f = Grid::full(&[2, 2, 3], 4.5);
        let s = FlowField::new(Grid::from_fn3(6, 6, 2, |y, x, c| {
            let p = if c == 0 { x } else { y } as f64;
            // keep p + s inside [0, 5]
            let t = libm::sin((y * 6 + x + c) as f64) * 0.9;
            if p + t < 0.0 || p + t > 5.0 { -t } else { t }
        }))
        .unwrap();
        let w = warp(&f, &s, Shape2D::new(6, 6, 3).unwrap()).unwrap();
        assert!(w.data().iter().all(|&v| (v - 4.5).abs() < 1e-12));
    }

    #[test]
    fn gen_flow_shape_and_zero_head() {
        let fh = Grid::from_fn3(6, 4, 3, |y, x, c| (y + x * c) as f64 * 0.1);
        let fl = Grid::from_fn3(3, 2, 5, |y, x, c| (y * x + c) as f64 * 0.2);
        let mut p = params(3, 5, 4, 0.0);
        let s = gen_flow(&fh, &fl, &p).unwrap();
        assert_eq!(s.grid().shape(), &[6, 4, 2]);
        p.flow = zero_flow_kernel(4);
        assert!(gen_flow(&fh, &fl, &p).unwrap().grid().data().iter().all(|&v| v == 0.0));
        assert!(gen_flow(&fl, &fh, &params(5, 3, 4, 0.0)).is_err());
    }

    #[test]
    fn gen_flow_single_pixel_by_hand() {
        // 1×1 maps, D = 1: high -> 2·h + 0.5, low -> -1·l, flow centre taps only.
        let fh = Grid::new(alloc::vec![1, 1, 1], alloc::vec![3.0]).unwrap();
        let fl = Grid::new(alloc::vec![1, 1, 1], alloc::vec![2.0]).unwrap();
        let mut fw = Grid::zeros(&[3, 3, 2, 2]);
        // centre tap (1,1): [ci][co]
        let base = (1 * 3 + 1) * 4;
        fw.data_mut()[base..base + 4].copy_from_slice(&[0.5, -1.0, 0.25, 2.0]);
        // off-centre taps only ever see zero padding
        fw.data_mut()[0] = 100.0;
        let p = L2gParams {
            map_high: KernelSpec::new(Grid::full(&[1, 1, 1, 1], 2.0), alloc::vec![0.5]).unwrap(),
            map_low: KernelSpec::new(Grid::full(&[1, 1, 1, 1], -1.0), alloc::vec![0.0]).unwrap(),
            flow: KernelSpec::new(fw, alloc::vec![0.1, 0.2]).unwrap(),
        };
        // fused = [up(low) = -2, high = 6.5]
        // dx = 0.1 + 0.5·(-2) + 0.25·6.5 = 0.725
        // dy = 0.2 + (-1)·(-2) + 2·6.5 = 15.2
        let s = gen_flow(&fh, &fl, &p).unwrap();
        assert!((s.dx(0, 0) - 0.725).abs() < 1e-15);
        assert!((s.dy(0, 0) - 15.2).abs() < 1e-15);
    }

    #[test]
    fn register_degenerate_cases() {
        let fh = Grid::from_fn3(4, 4, 2, |y, x, c| (y * 3 + x + c) as f64 * 0.1);
        let fl = Grid::from_fn3(2, 2, 2, |y, x, c| (y + x + c) as f64);
        let zero = L2gParams {
            map_high: KernelSpec::zeros(1, 1, 2, 2),
            map_low: KernelSpec::zeros(1, 1, 2, 2),
            flow: zero_flow_kernel(2),
        };
        assert!(l2g_register(&fh, &fl, &zero).unwrap().data().iter().all(|&v| v == 0.0));

        let one_sided = L2gParams {
            map_high: KernelSpec::identity(2),
            map_low: KernelSpec::identity(2),
            flow: params(2, 2, 2, 1.0).flow,
        };
        let out = l2g_register(&fh, &Grid::zeros(&[2, 2, 2]), &one_sided).unwrap();
        assert_eq!(out, fh);
    }
}
