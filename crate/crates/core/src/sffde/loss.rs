//! Reverse Huber (berHu) loss: L1 for small residuals, scaled L2 beyond
//! the threshold `c = c_fraction · max|pred − gt|` taken per call over the
//! valid pixels.

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BerHuConfig {
    pub c_fraction: f64,
}

impl Default for BerHuConfig {
    fn default() -> Self {
        Self { c_fraction: 0.2 }
    }
}

impl BerHuConfig {
    pub fn new(c_fraction: f64) -> Result<Self> {
        if !(c_fraction > 0.0 && c_fraction <= 1.0) {
            return Err(Error::invalid("BerHuConfig", "c_fraction must lie in (0, 1]"));
        }
        Ok(Self { c_fraction })
    }
}

pub(crate) fn check_pair(op: &'static str, pred: &Grid, gt: &Grid, valid: Option<&[bool]>) -> Result<usize> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape(op, pred.shape(), gt.shape()));
    }
    let n = match valid {
        Some(m) if m.len() != pred.len() => return Err(Error::shape(op, pred.shape(), &[m.len()])),
        Some(m) => m.iter().filter(|&&v| v).count(),
        None => pred.len(),
    };
    if n == 0 {
        return Err(Error::EmptyValidSet { op });
    }
    Ok(n)
}

#[inline]
pub(crate) fn is_valid(valid: Option<&[bool]>, i: usize) -> bool {
    valid.is_none_or(|m| m[i])
}

/// Threshold for this prediction: `c_fraction · max |pred − gt|`.
pub fn berhu_threshold(pred: &Grid, gt: &Grid, cfg: &BerHuConfig, valid: Option<&[bool]>) -> Result<f64> {
    check_pair("berhu_loss", pred, gt, valid)?;
    let max = pred
        .data()
        .iter()
        .zip(gt.data())
        .enumerate()
        .filter(|(i, _)| is_valid(valid, *i))
        .fold(0.0_f64, |m, (_, (p, g))| m.max(libm::fabs(p - g)));
    Ok(cfg.c_fraction * max)
}

/// Per-residual loss at a fixed threshold. `c = 0` only arises when every
/// residual is zero, where the L1 branch gives 0.
#[inline]
pub fn berhu_value(x: f64, c: f64) -> f64 {
    let a = libm::fabs(x);
    if a <= c {
        a
    } else {
        (x * x + c * c) / (2.0 * c)
    }
}

/// Mean berHu over the valid pixels at an explicit threshold.
pub fn berhu_loss_at(pred: &Grid, gt: &Grid, c: f64, valid: Option<&[bool]>) -> Result<f64> {
    let n = check_pair("berhu_loss", pred, gt, valid)?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .enumerate()
        .filter(|(i, _)| is_valid(valid, *i))
        .map(|(_, (p, g))| berhu_value(p - g, c))
        .sum();
    Ok(total / n as f64)
}

pub fn berhu_loss(pred: &Grid, gt: &Grid, cfg: &BerHuConfig, valid: Option<&[bool]>) -> Result<f64> {
    let c = berhu_threshold(pred, gt, cfg, valid)?;
    berhu_loss_at(pred, gt, c, valid)
}
