//! Elevation-estimation metrics: mean relative error, RMSE, RMSE of the
//! natural log, and δ accuracies with thresholds `1.25^i`.
//!
//! Evaluation accumulates sufficient statistics with exact summation, so a
//! raster split into tiles and merged in any order reports exactly the same
//! numbers as a single pass.

use crate::error::{Error, Result};
use crate::fsum::ExactSum;
use crate::grid::Grid;

pub const DELTA_BASE: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_valid: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Compute RMSE over every finite pixel in the valid set, including
    /// pixels excluded from the ratio/log metrics for being non-positive.
    pub rmse_over_all: bool,
}

/// Running sums for the metrics; merge partial results with [`merge`](Self::merge).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsAccumulator {
    rel: ExactSum,
    sq: ExactSum,
    sq_log: ExactSum,
    sq_all: ExactSum,
    n_all: usize,
    delta: [usize; 3],
    n_valid: usize,
    n_excluded: usize,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, pred: f64, gt: f64) {
        if pred.is_finite() && gt.is_finite() {
            self.sq_all.add((pred - gt) * (pred - gt));
            self.n_all += 1;
        }
        if !(pred > 0.0 && gt > 0.0 && pred.is_finite() && gt.is_finite()) {
            self.n_excluded += 1;
            return;
        }
        let diff = pred - gt;
        self.rel.add(libm::fabs(diff) / gt);
        self.sq.add(diff * diff);
        let dl = libm::log(pred) - libm::log(gt);
        self.sq_log.add(dl * dl);
        let ratio = (pred / gt).max(gt / pred);
        let mut thr = 1.0;
        for d in &mut self.delta {
            thr *= DELTA_BASE;
            if ratio < thr {
                *d += 1;
            }
        }
        self.n_valid += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.rel.merge(&other.rel);
        self.sq.merge(&other.sq);
        self.sq_log.merge(&other.sq_log);
        self.sq_all.merge(&other.sq_all);
        self.n_all += other.n_all;
        for (a, b) in self.delta.iter_mut().zip(other.delta) {
            *a += b;
        }
        self.n_valid += other.n_valid;
        self.n_excluded += other.n_excluded;
    }

    pub fn finish(&self, opts: EvalOptions) -> Result<MetricsReport> {
        if self.n_valid == 0 {
            return Err(Error::EmptyValidSet { op: "evaluate" });
        }
        let n = self.n_valid as f64;
        let rmse = if opts.rmse_over_all {
            libm::sqrt(self.sq_all.value() / self.n_all as f64)
        } else {
            libm::sqrt(self.sq.value() / n)
        };
        Ok(MetricsReport {
            rel: self.rel.value() / n,
            rmse,
            rmse_log: libm::sqrt(self.sq_log.value() / n),
            delta1: self.delta[0] as f64 / n,
            delta2: self.delta[1] as f64 / n,
            delta3: self.delta[2] as f64 / n,
            n_valid: self.n_valid,
            n_excluded: self.n_excluded,
        })
    }
}

/// Metrics over the pixels selected by `valid` (all pixels when `None`).
/// Pixels where either value is non-positive or non-finite are excluded and
/// counted in `n_excluded`.
pub fn evaluate(pred: &Grid, gt: &Grid, valid: Option<&[bool]>) -> Result<MetricsReport> {
    evaluate_with(pred, gt, valid, EvalOptions::default())
}

pub fn evaluate_with(pred: &Grid, gt: &Grid, valid: Option<&[bool]>, opts: EvalOptions) -> Result<MetricsReport> {
    accumulate(pred, gt, valid)?.finish(opts)
}

pub fn accumulate(pred: &Grid, gt: &Grid, valid: Option<&[bool]>) -> Result<MetricsAccumulator> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape("evaluate", pred.shape(), gt.shape()));
    }
    if let Some(m) = valid {
        if m.len() != pred.len() {
            return Err(Error::shape("evaluate", pred.shape(), &[m.len()]));
        }
    }
    let mut acc = MetricsAccumulator::new();
    for (i, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
        if valid.is_none_or(|m| m[i]) {
            acc.push(p, g);
        }
    }
    Ok(acc)
}
