//! Regression-based derivative of cepstral trajectories.

use ndarray::Array2;

use crate::Scalar;

const DELTA_WINDOW: usize = 2;

/// d_t = sum_{m=1..2} m*(c_{t+m} - c_{t-m}) / (2 * sum m^2), with frame
/// indices clamped to the matrix (edge replication). Rows are frames.
pub fn deltas<S: Scalar>(static_coeffs: &Array2<S>) -> Array2<S> {
    let (n, dim) = static_coeffs.dim();
    assert!(n >= 1, "need at least one frame");
    let denom = S::of_usize(2 * (1..=DELTA_WINDOW).map(|m| m * m).sum::<usize>());
    let mut out = Array2::zeros((n, dim));
    for t in 0..n {
        for j in 0..dim {
            let mut acc = S::zero();
            for m in 1..=DELTA_WINDOW {
                let ahead = (t + m).min(n - 1);
                let behind = t.saturating_sub(m);
                acc += S::of_usize(m) * (static_coeffs[(ahead, j)] - static_coeffs[(behind, j)]);
            }
            out[(t, j)] = acc / denom;
        }
    }
    out
}
