//! Inverted dropout. Mask entries are 0 with probability `rate` and
//! 1/(1-rate) otherwise, so the expected activation is unchanged and
//! inference needs no rescaling.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

use super::Mode;

fn keep_value<S: Scalar>(rate: f64, rng: &mut ChaCha8Rng) -> S {
    assert!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0, 1)");
    if rng.gen::<f64>() < rate {
        S::zero()
    } else {
        S::of_f64(1.0 / (1.0 - rate))
    }
}

/// Fresh 2-D mask, one draw per cell.
pub fn dropout_mask2<S: Scalar>(
    rows: usize,
    cols: usize,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Array2<S> {
    Array2::from_shape_simple_fn((rows, cols), || keep_value(rate, rng))
}

/// Fresh 3-D mask for a (T, batch, features) activation block.
pub fn dropout_mask3<S: Scalar>(
    t_len: usize,
    batch: usize,
    features: usize,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Array3<S> {
    Array3::from_shape_simple_fn((t_len, batch, features), || keep_value(rate, rng))
}

/// Applies dropout in place during training; identity during inference.
/// The RNG is only consumed in training mode.
pub fn dropout<S: Scalar>(x: &mut Array3<S>, rate: f64, rng: &mut ChaCha8Rng, mode: Mode) {
    if mode == Mode::Infer || rate == 0.0 {
        assert!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0, 1)");
        return;
    }
    let (t_len, batch, features) = x.dim();
    let mask = dropout_mask3::<S>(t_len, batch, features, rate, rng);
    *x *= &mask;
}
