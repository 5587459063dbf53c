//! Weight initialization.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

/// Uniform draws in +-sqrt(6 / (in_dim + out_dim)).
pub fn glorot_uniform<S: Scalar>(
    in_dim: usize,
    out_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Array2<S> {
    assert!(in_dim >= 1 && out_dim >= 1, "degenerate dimensions");
    let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
    let mut w = Array2::zeros((in_dim, out_dim));
    for v in w.iter_mut() {
        *v = S::of_f64(rng.gen_range(-bound..bound));
    }
    w
}
