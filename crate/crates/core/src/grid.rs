//! Dense row-major grids and the primitive operators built on them.
//!
//! A [`Grid`] is a shape plus a flat `Vec<f64>`. Rank-3 grids are laid out
//! as `H×W×C` (channel fastest), rank-2 as `rows×cols`. Every operator is a
//! pure function with a fixed loop order, so results are reproducible bit
//! for bit regardless of who calls them or from which thread.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fsum::ExactSum;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
}

/// Spatial extent of a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape2D {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape2D {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("Shape2D", "all extents must be >= 1"));
        }
        Ok(Self {
            height,
            width,
            channels,
        })
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

impl Grid {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(
                "Grid::new",
                alloc::format!("shape {:?} needs {} values, got {}", shape, n, data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut g = Self::zeros(&[n, n]);
        for i in 0..n {
            g.data[i * n + i] = 1.0;
        }
        g
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("Grid::from_rows", "ragged rows"));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn from_fn3(h: usize, w: usize, c: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(h * w * c);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    data.push(f(y, x, ch));
                }
            }
        }
        Self {
            shape: vec![h, w, c],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::RankMismatch {
                op,
                expected: 2,
                found: self.rank(),
            }),
        }
    }

    pub fn dims3(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::RankMismatch {
                op,
                expected: 3,
                found: self.rank(),
            }),
        }
    }

    /// `(H, W, C)` for rank-3 grids, `(H, W, 1)` for rank-2 grids.
    pub fn spatial(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [h, w] => Ok((h, w, 1)),
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::RankMismatch {
                op,
                expected: 3,
                found: self.rank(),
            }),
        }
    }

    #[inline]
    pub fn at2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    #[inline]
    pub fn at3(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.shape[1] + x) * self.shape[2] + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Grid, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Grid) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(libm::fabs(*v)))
    }

    /// Channel `c` of an `H×W×C` grid as an `H×W` grid.
    pub fn channel(&self, c: usize) -> Result<Grid> {
        let (h, w, ch) = self.dims3("channel")?;
        if c >= ch {
            return Err(Error::invalid("channel", "channel index out of range"));
        }
        let data = (0..h * w).map(|p| self.data[p * ch + c]).collect();
        Grid::new(vec![h, w], data)
    }
}

/// `H×W×C -> N×C` with `N = H·W`, row `y·W + x` holding pixel `(y, x)`.
pub fn flatten(g: &Grid) -> Result<Grid> {
    let (h, w, c) = g.dims3("flatten")?;
    Grid::new(vec![h * w, c], g.data.clone())
}

pub fn unflatten(g: &Grid, h: usize, w: usize) -> Result<Grid> {
    let (n, c) = g.dims2("unflatten")?;
    if n != h * w {
        return Err(Error::shape("unflatten", &[n, c], &[h, w, c]));
    }
    Grid::new(vec![h, w, c], g.data.clone())
}

pub fn transpose(a: &Grid) -> Result<Grid> {
    let (m, n) = a.dims2("transpose")?;
    let mut out = Grid::zeros(&[n, m]);
    for i in 0..m {
        for j in 0..n {
            out.data[j * m + i] = a.data[i * n + j];
        }
    }
    Ok(out)
}

/// Plain `i-k-j` product; accumulation order is fixed.
pub fn matmul(a: &Grid, b: &Grid) -> Result<Grid> {
    let (m, k) = a.dims2("matmul")?;
    let (k2, p) = b.dims2("matmul")?;
    if k != k2 {
        return Err(Error::shape("matmul", &a.shape, &b.shape));
    }
    let mut out = Grid::zeros(&[m, p]);
    for i in 0..m {
        let orow = &mut out.data[i * p..(i + 1) * p];
        for kk in 0..k {
            let av = a.data[i * k + kk];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[kk * p..(kk + 1) * p];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// Row-wise softmax with max subtraction. The normalizer is summed
/// exactly, so permuting a row permutes its output bit for bit.
pub fn softmax_rows(a: &Grid) -> Result<Grid> {
    let (m, p) = a.dims2("softmax_rows")?;
    let mut out = a.clone();
    let mut acc = ExactSum::new();
    for i in 0..m {
        let row = &mut out.data[i * p..(i + 1) * p];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        acc.clear();
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            acc.add(*v);
        }
        let sum = acc.value();
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

pub const LAYERNORM_EPS: f64 = 1e-5;

/// Per-row normalization to zero mean and unit (biased) variance, then
/// `gamma * x + beta`.
pub fn layernorm(a: &Grid, gamma: &[f64], beta: &[f64], eps: f64) -> Result<Grid> {
    let (n, d) = a.dims2("layernorm")?;
    if gamma.len() != d || beta.len() != d {
        return Err(Error::shape("layernorm", &[n, d], &[gamma.len(), beta.len()]));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("layernorm", "eps must be > 0"));
    }
    let mut out = a.clone();
    for i in 0..n {
        let row = &mut out.data[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / libm::sqrt(var + eps);
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * gamma[j] + beta[j];
        }
    }
    Ok(out)
}

pub fn relu(a: &Grid) -> Grid {
    a.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Convolution weights laid out `kh×kw×cin×cout`, plus one bias per output
/// channel. Kernel extents must be odd so that zero padding of `k/2`
/// preserves the spatial size.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub weights: Grid,
    pub bias: Vec<f64>,
}

impl KernelSpec {
    pub fn new(weights: Grid, bias: Vec<f64>) -> Result<Self> {
        let spec = Self { weights, bias };
        spec.check()?;
        Ok(spec)
    }

    pub fn zeros(kh: usize, kw: usize, cin: usize, cout: usize) -> Self {
        Self {
            weights: Grid::zeros(&[kh, kw, cin, cout]),
            bias: vec![0.0; cout],
        }
    }

    /// 1×1 kernel whose weight matrix is `cin×cout` `m`.
    pub fn pointwise(m: &Grid, bias: Vec<f64>) -> Result<Self> {
        let (cin, cout) = m.dims2("KernelSpec::pointwise")?;
        Self::new(Grid::new(vec![1, 1, cin, cout], m.data.clone())?, bias)
    }

    pub fn identity(c: usize) -> Self {
        Self::pointwise(&Grid::identity(c), vec![0.0; c]).expect("identity kernel is well formed")
    }

    /// `(kh, kw, cin, cout)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.weights.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn check(&self) -> Result<()> {
        if self.weights.rank() != 4 {
            return Err(Error::RankMismatch {
                op: "conv2d",
                expected: 4,
                found: self.weights.rank(),
            });
        }
        let (kh, kw, _, cout) = self.dims();
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::invalid("conv2d", "kernel extents must be odd"));
        }
        if self.bias.len() != cout {
            return Err(Error::shape("conv2d", self.weights.shape(), &[self.bias.len()]));
        }
        Ok(())
    }
}

/// Same-size cross-correlation with zero padding.
pub fn conv2d(g: &Grid, k: &KernelSpec) -> Result<Grid> {
    k.check()?;
    let (h, w, cin) = g.dims3("conv2d")?;
    let (kh, kw, kcin, cout) = k.dims();
    if kcin != cin {
        return Err(Error::shape("conv2d", g.shape(), k.weights.shape()));
    }
    let (ry, rx) = ((kh / 2) as isize, (kw / 2) as isize);
    let wd = k.weights.data();
    let mut out = Grid::zeros(&[h, w, cout]);
    for y in 0..h {
        for x in 0..w {
            let obase = (y * w + x) * cout;
            let acc = &mut out.data[obase..obase + cout];
            acc.copy_from_slice(&k.bias);
            for ky in 0..kh {
                let sy = y as isize + ky as isize - ry;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let sx = x as isize + kx as isize - rx;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let ibase = (sy as usize * w + sx as usize) * cin;
                    for ci in 0..cin {
                        let iv = g.data[ibase + ci];
                        if iv == 0.0 {
                            continue;
                        }
                        let wbase = ((ky * kw + kx) * cin + ci) * cout;
                        for (a, &wv) in acc.iter_mut().zip(&wd[wbase..wbase + cout]) {
                            *a += iv * wv;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Source coordinate of output index `i` under the align-corners convention.
#[inline]
pub(crate) fn align_corners_src(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out <= 1 || n_in <= 1 {
        0.0
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

/// Lower tap index and upper-tap weight for a source coordinate.
#[inline]
pub(crate) fn lerp_taps(src: f64, n_in: usize) -> (usize, usize, f64) {
    let i0 = (libm::floor(src) as usize).min(n_in - 1);
    let i1 = (i0 + 1).min(n_in - 1);
    (i0, i1, src - i0 as f64)
}

/// Align-corners bilinear resampling of an `H×W×C` (or `H×W`) grid to
/// `out.height × out.width`. The channel count is taken from the input.
pub fn bilinear_resize(g: &Grid, out: Shape2D) -> Result<Grid> {
    let (h, w, c) = g.spatial("bilinear_resize")?;
    let (oh, ow) = (out.height, out.width);
    if oh == 0 || ow == 0 || h == 0 || w == 0 {
        return Err(Error::invalid("bilinear_resize", "extents must be >= 1"));
    }
    let mut shape = vec![oh, ow];
    if g.rank() == 3 {
        shape.push(c);
    }
    if oh == h && ow == w {
        return Ok(g.clone());
    }
    let mut data = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        let (y0, y1, fy) = lerp_taps(align_corners_src(oy, h, oh), h);
        for ox in 0..ow {
            let (x0, x1, fx) = lerp_taps(align_corners_src(ox, w, ow), w);
            let w00 = (1.0 - fy) * (1.0 - fx);
            let w01 = (1.0 - fy) * fx;
            let w10 = fy * (1.0 - fx);
            let w11 = fy * fx;
            let obase = (oy * ow + ox) * c;
            for ch in 0..c {
                data[obase + ch] = w00 * g.data[(y0 * w + x0) * c + ch]
                    + w01 * g.data[(y0 * w + x1) * c + ch]
                    + w10 * g.data[(y1 * w + x0) * c + ch]
                    + w11 * g.data[(y1 * w + x1) * c + ch];
            }
        }
    }
    Grid::new(shape, data)
}

pub fn concat_channels(a: &Grid, b: &Grid) -> Result<Grid> {
    let (h, w, c1) = a.dims3("concat_channels")?;
    let (h2, w2, c2) = b.dims3("concat_channels")?;
    if h != h2 || w != w2 {
        return Err(Error::shape("concat_channels", a.shape(), b.shape()));
    }
    let mut data = Vec::with_capacity(h * w * (c1 + c2));
    for p in 0..h * w {
        data.extend_from_slice(&a.data[p * c1..(p + 1) * c1]);
        data.extend_from_slice(&b.data[p * c2..(p + 1) * c2]);
    }
    Grid::new(vec![h, w, c1 + c2], data)
}

/// Inverse of [`concat_channels`]: channels `[0, at)` and `[at, C)`.
pub fn split_channels(g: &Grid, at: usize) -> Result<(Grid, Grid)> {
    let (h, w, c) = g.dims3("split_channels")?;
    if at > c {
        return Err(Error::invalid("split_channels", "split point beyond channel count"));
    }
    let mut a = Vec::with_capacity(h * w * at);
    let mut b = Vec::with_capacity(h * w * (c - at));
    for p in 0..h * w {
        a.extend_from_slice(&g.data[p * c..p * c + at]);
        b.extend_from_slice(&g.data[p * c + at..(p + 1) * c]);
    }
    Ok((Grid::new(vec![h, w, at], a)?, Grid::new(vec![h, w, c - at], b)?))
}

/// Columns `[start, start + len)` of an `N×D` grid.
pub fn slice_cols(g: &Grid, start: usize, len: usize) -> Result<Grid> {
    let (n, d) = g.dims2("slice_cols")?;
    if start + len > d {
        return Err(Error::invalid("slice_cols", "column range out of bounds"));
    }
    let mut data = Vec::with_capacity(n * len);
    for i in 0..n {
        data.extend_from_slice(&g.data[i * d + start..i * d + start + len]);
    }
    Grid::new(vec![n, len], data)
}

/// Horizontal concatenation of `N×Dᵢ` grids.
pub fn concat_cols(parts: &[Grid]) -> Result<Grid> {
    let n = match parts.first() {
        Some(p) => p.dims2("concat_cols")?.0,
        None => return Err(Error::invalid("concat_cols", "no parts")),
    };
    let mut d = 0;
    for p in parts {
        let (pn, pd) = p.dims2("concat_cols")?;
        if pn != n {
            return Err(Error::shape("concat_cols", parts[0].shape(), p.shape()));
        }
        d += pd;
    }
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        for p in parts {
            data.extend_from_slice(p.row(i));
        }
    }
    Grid::new(vec![n, d], data)
}

/// 2×2 max pooling with stride 2; odd trailing rows/cols are dropped.
pub fn max_pool2(g: &Grid) -> Result<Grid> {
    let (h, w, c) = g.dims3("max_pool2")?;
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(Error::invalid("max_pool2", "input smaller than 2×2"));
    }
    Ok(Grid::from_fn3(oh, ow, c, |y, x, ch| {
        let a = g.at3(2 * y, 2 * x, ch);
        let b = g.at3(2 * y, 2 * x + 1, ch);
        let cc = g.at3(2 * y + 1, 2 * x, ch);
        let d = g.at3(2 * y + 1, 2 * x + 1, ch);
        a.max(b).max(cc.max(d))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn flatten_examples() {
        let g = Grid::new(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let f = flatten(&g).unwrap();
        assert_eq!(f.shape(), &[1, 3]);
        assert_eq!(f.data(), &[1.0, 2.0, 3.0]);

        let g = Grid::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let f = flatten(&g).unwrap();
        assert_eq!(f.shape(), &[4, 1]);
        assert_eq!(f.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unflatten(&f, 2, 2).unwrap(), g);

        assert!(matches!(
            flatten(&Grid::zeros(&[2, 2])),
            Err(Error::RankMismatch { .. })
        ));
    }

    #[test]
    fn matmul_examples() {
        let m = Grid::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Grid::identity(2), &m).unwrap(), m);
        let a = Grid::from_rows(&[&[1.0, 2.0]]).unwrap();
        let b = Grid::from_rows(&[&[3.0], &[4.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[11.0]);
        let z = matmul(&Grid::zeros(&[3, 2]), &m).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(matches!(matmul(&a, &a), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn softmax_examples() {
        let a = Grid::from_rows(&[&[0.0, 0.0], &[1000.0, 1000.0], &[0.0, libm::log(3.0)]]).unwrap();
        let s = softmax_rows(&a).unwrap();
        assert_eq!(s.row(0), &[0.5, 0.5]);
        assert_eq!(s.row(1), &[0.5, 0.5]);
        assert!(close(s.at2(2, 0), 0.25, 1e-15));
        assert!(close(s.at2(2, 1), 0.75, 1e-15));
    }

    #[test]
    fn layernorm_examples() {
        let one = [1.0, 1.0];
        let zero = [0.0, 0.0];
        let c = Grid::from_rows(&[&[4.0, 4.0]]).unwrap();
        assert_eq!(layernorm(&c, &one, &zero, LAYERNORM_EPS).unwrap().data(), &[0.0, 0.0]);

        let r = Grid::from_rows(&[&[1.0, 3.0]]).unwrap();
        let out = layernorm(&r, &one, &zero, 1e-12).unwrap();
        assert!(close(out.at2(0, 0), -1.0, 1e-9) && close(out.at2(0, 1), 1.0, 1e-9));

        let b = [0.5, -2.0];
        let shifted = layernorm(&r, &one, &b, LAYERNORM_EPS).unwrap();
        let base = layernorm(&r, &one, &zero, LAYERNORM_EPS).unwrap();
        for j in 0..2 {
            assert!(close(shifted.at2(0, j), base.at2(0, j) + b[j], 1e-15));
        }
        assert!(layernorm(&r, &one, &zero, 0.0).is_err());
    }

    #[test]
    fn relu_examples() {
        let a = Grid::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&a).data(), &[0.0, 0.0, 2.0]);
        let p = Grid::new(vec![2], vec![0.5, 3.0]).unwrap();
        assert_eq!(relu(&p), p);
        assert_eq!(relu(&relu(&a)), relu(&a));
    }

    #[test]
    fn conv2d_examples() {
        let g = Grid::from_fn3(3, 4, 2, |y, x, c| (y * 7 + x * 3 + c) as f64 * 0.37 - 1.0);
        assert_eq!(conv2d(&g, &KernelSpec::identity(2)).unwrap(), g);

        let mut k = KernelSpec::zeros(3, 3, 2, 3);
        k.bias = vec![1.5, -2.0, 0.25];
        let out = conv2d(&g, &k).unwrap();
        for p in 0..12 {
            assert_eq!(&out.data()[p * 3..p * 3 + 3], &[1.5, -2.0, 0.25]);
        }

        let five = Grid::full(&[3, 3, 1], 5.0);
        let boxk = KernelSpec::new(Grid::full(&[3, 3, 1, 1], 1.0 / 9.0), vec![0.0]).unwrap();
        let out = conv2d(&five, &boxk).unwrap();
        assert!(close(out.at3(1, 1, 0), 5.0, 1e-12));
        // corners see 4 of 9 taps, edges 6 of 9
        assert!(close(out.at3(0, 0, 0), 5.0 * 4.0 / 9.0, 1e-12));
        assert!(close(out.at3(0, 1, 0), 5.0 * 6.0 / 9.0, 1e-12));

        let even = KernelSpec::new(Grid::zeros(&[2, 2, 1, 1]), vec![0.0]);
        assert!(even.is_err());
    }

    #[test]
    fn bilinear_examples() {
        let g = Grid::from_fn3(3, 5, 2, |y, x, c| (y * x + c) as f64);
        assert_eq!(bilinear_resize(&g, Shape2D::new(3, 5, 2).unwrap()).unwrap(), g);

        let row = Grid::new(vec![1, 2, 1], vec![0.0, 2.0]).unwrap();
        let up = bilinear_resize(&row, Shape2D::new(1, 3, 1).unwrap()).unwrap();
        assert_eq!(up.data(), &[0.0, 1.0, 2.0]);

        let seven = Grid::full(&[2, 3, 1], 7.0);
        let up = bilinear_resize(&seven, Shape2D::new(9, 4, 1).unwrap()).unwrap();
        assert!(up.data().iter().all(|&v| close(v, 7.0, 1e-12)));
    }

    #[test]
    fn concat_examples() {
        let a = Grid::from_fn3(2, 2, 1, |y, x, _| (y * 2 + x) as f64);
        let b = Grid::from_fn3(2, 2, 2, |y, x, c| 10.0 + (y * 4 + x * 2 + c) as f64);
        let ab = concat_channels(&a, &b).unwrap();
        assert_eq!(ab.shape(), &[2, 2, 3]);
        assert_eq!(ab.channel(0).unwrap(), a.channel(0).unwrap());
        assert_eq!(concat_channels(&a, &Grid::zeros(&[2, 2, 0])).unwrap(), a);
        assert_eq!(split_channels(&ab, 1).unwrap(), (a, b));
        assert!(concat_channels(&Grid::zeros(&[2, 3, 1]), &Grid::zeros(&[2, 2, 1])).is_err());
    }

    #[test]
    fn max_pool_halves() {
        let g = Grid::from_fn3(4, 4, 1, |y, x, _| (y * 4 + x) as f64);
        let p = max_pool2(&g).unwrap();
        assert_eq!(p.data(), &[5.0, 7.0, 13.0, 15.0]);
    }
}
