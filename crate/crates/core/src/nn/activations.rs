//! Pointwise activations and the row-wise softmax.

use ndarray::Array2;

use crate::Scalar;

/// clamp(0.2*x + 0.5, 0, 1).
pub fn hard_sigmoid<S: Scalar>(x: S) -> S {
    let y = S::of_f64(0.2) * x + S::of_f64(0.5);
    y.max(S::zero()).min(S::one())
}

/// Derivative recovered from the activation value: 0.2 on the linear ramp,
/// 0 on both saturated plateaus.
pub fn hard_sigmoid_grad_from_value<S: Scalar>(y: S) -> S {
    if y > S::zero() && y < S::one() {
        S::of_f64(0.2)
    } else {
        S::zero()
    }
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Row-wise stabilized softmax; each row sums to 1.
pub fn softmax_rows<S: Scalar>(logits: &Array2<S>) -> Array2<S> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.iter().cloned().sum::<S>();
        row.mapv_inplace(|v| v / sum);
    }
    out
}
