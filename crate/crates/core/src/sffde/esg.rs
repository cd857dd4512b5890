//! Globalized attention over a flattened feature map.
//!
//! Scores are the raw `Q·Kᵀ` product with no `1/√d` temperature; the
//! operator is applied exactly as `Softmax(Q·Kᵀ)·V`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fsum::ExactSum;
use crate::grid::{concat_cols, layernorm, matmul, relu, slice_cols, softmax_rows, transpose, Grid, LAYERNORM_EPS};

#[derive(Debug, Clone, PartialEq)]
pub struct EsgParams {
    /// `C×D` query projection.
    pub w_q: Grid,
    pub w_k: Grid,
    pub w_v: Grid,
    pub heads: usize,
    /// `D×D` projection applied to the concatenated heads.
    pub w_out: Grid,
}

impl EsgParams {
    pub fn new(w_q: Grid, w_k: Grid, w_v: Grid, heads: usize, w_out: Grid) -> Result<Self> {
        let p = Self {
            w_q,
            w_k,
            w_v,
            heads,
            w_out,
        };
        p.check()?;
        Ok(p)
    }

    pub fn in_channels(&self) -> usize {
        self.w_q.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.w_q.shape()[1]
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }

    pub fn check(&self) -> Result<()> {
        let (c, d) = self.w_q.dims2("EsgParams")?;
        for w in [&self.w_k, &self.w_v] {
            if w.shape() != [c, d] {
                return Err(Error::shape("EsgParams", self.w_q.shape(), w.shape()));
            }
        }
        if self.heads == 0 || d % self.heads != 0 {
            return Err(Error::invalid(
                "EsgParams",
                alloc::format!("width {d} is not divisible by {} heads", self.heads),
            ));
        }
        if self.w_out.shape() != [d, d] {
            return Err(Error::shape("EsgParams", &[d, d], self.w_out.shape()));
        }
        if ![&self.w_q, &self.w_k, &self.w_v, &self.w_out].iter().all(|w| w.all_finite()) {
            return Err(Error::invalid("EsgParams", "non-finite weight"));
        }
        Ok(())
    }
}

/// Feature projection `Relu(LN(FC(·)))` applied after multi-head ESG.
#[derive(Debug, Clone, PartialEq)]
pub struct EsgProjection {
    pub fc: Grid,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub fn esg_qkv(f: &Grid, p: &EsgParams) -> Result<(Grid, Grid, Grid)> {
    let (_, c) = f.dims2("esg_qkv")?;
    if c != p.in_channels() {
        return Err(Error::shape("esg_qkv", f.shape(), p.w_q.shape()));
    }
    Ok((matmul(f, &p.w_q)?, matmul(f, &p.w_k)?, matmul(f, &p.w_v)?))
}

/// Attention weights `Softmax(Q·Kᵀ)` (`N×N`).
pub fn esg_weights(q: &Grid, k: &Grid) -> Result<Grid> {
    if q.shape() != k.shape() {
        return Err(Error::shape("esg_attend", q.shape(), k.shape()));
    }
    softmax_rows(&matmul(q, &transpose(k)?)?)
}

/// `Softmax(Q·Kᵀ)·V`. Both sums over tokens are exact, so permuting the
/// rows of Q, K and V together permutes the output rows bit for bit.
pub fn esg_attend(q: &Grid, k: &Grid, v: &Grid) -> Result<Grid> {
    if q.rank() != 2 || v.rank() != 2 || q.shape()[0] != v.shape()[0] {
        return Err(Error::shape("esg_attend", q.shape(), v.shape()));
    }
    let a = esg_weights(q, k)?;
    let (n, dv) = v.dims2("esg_attend")?;
    let mut out = Vec::with_capacity(n * dv);
    let mut acc = ExactSum::new();
    for i in 0..n {
        let w = a.row(i);
        for c in 0..dv {
            acc.clear();
            for (j, &wj) in w.iter().enumerate() {
                acc.add(wj * v.at2(j, c));
            }
            out.push(acc.value());
        }
    }
    Grid::new(alloc::vec![n, dv], out)
}

/// Heads attend over contiguous channel slices of Q, K and V; their
/// outputs are concatenated and mixed by `w_out`.
pub fn multi_head_esg(f: &Grid, p: &EsgParams) -> Result<Grid> {
    p.check()?;
    let (q, k, v) = esg_qkv(f, p)?;
    let dh = p.head_dim();
    let heads = (0..p.heads)
        .map(|h| {
            let s = h * dh;
            esg_attend(&slice_cols(&q, s, dh)?, &slice_cols(&k, s, dh)?, &slice_cols(&v, s, dh)?)
        })
        .collect::<Result<Vec<_>>>()?;
    matmul(&concat_cols(&heads)?, &p.w_out)
}

pub fn esg_project(f_out: &Grid, proj: &EsgProjection) -> Result<Grid> {
    let fc = matmul(f_out, &proj.fc)?;
    Ok(relu(&layernorm(&fc, &proj.gamma, &proj.beta, LAYERNORM_EPS)?))
}
