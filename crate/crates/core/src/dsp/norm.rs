//! Per-column normalization statistics. Accumulation runs in compensated
//! f64 regardless of the feature scalar type, so fitted stats do not drift
//! with summation order or precision.

use ndarray::Array1;

use crate::Scalar;

use super::{DspError, FeatureMatrix, NormStats, Result};

const STD_FLOOR: f64 = 1e-8;

/// Kahan-compensated running sum.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Fits per-column mean and population standard deviation (floored at 1e-8)
/// over all rows. Callers must pass training rows only; validation and test
/// rows are normalized with these stats, never their own.
pub fn fit_norm_stats<S: Scalar>(features: &FeatureMatrix<S>) -> Result<NormStats<S>> {
    let (rows, cols) = features.data.dim();
    if rows < 2 {
        return Err(DspError::Argument(format!("need at least 2 rows, got {rows}")));
    }
    let n = rows as f64;
    let mut mean = vec![0.0f64; cols];
    for (j, m) in mean.iter_mut().enumerate() {
        let mut acc = Compensated::default();
        for v in features.data.column(j) {
            acc.add(v.as_f64());
        }
        *m = acc.sum / n;
    }
    let mut std = vec![0.0f64; cols];
    for (j, s) in std.iter_mut().enumerate() {
        let mut acc = Compensated::default();
        for v in features.data.column(j) {
            let d = v.as_f64() - mean[j];
            acc.add(d * d);
        }
        *s = (acc.sum / n).sqrt().max(STD_FLOOR);
    }
    Ok(NormStats {
        mean: Array1::from_iter(mean.into_iter().map(S::of_f64)),
        std: Array1::from_iter(std.into_iter().map(S::of_f64)),
    })
}

/// (x - mean) / std per column. The input matrix keeps raw values; this
/// returns a normalized copy.
pub fn apply_norm<S: Scalar>(features: &FeatureMatrix<S>, stats: &NormStats<S>) -> FeatureMatrix<S> {
    assert_eq!(features.data.ncols(), stats.dim(), "stat dimension mismatch");
    let mut out = features.clone();
    for mut row in out.data.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - stats.mean[j]) / stats.std[j];
        }
    }
    out
}
