//! From-scratch neural-network engine: dense, LSTM (with backpropagation
//! through time), batch normalization, dropout, RMSE loss with L1 bias
//! penalty, and Adam with a plateau scheduler.
//!
//! Sequence tensors are time-major `(T, batch, features)` throughout.

mod activations;
mod adam;
mod batchnorm;
mod dense;
mod dropout;
pub mod gradcheck;
mod init;
mod loss;
mod lstm;

pub use activations::{hard_sigmoid, hard_sigmoid_grad_from_value, sigmoid, softmax_rows};
pub use adam::{AdamState, PlateauScheduler};
pub use batchnorm::{
    batchnorm_backward, batchnorm_backward_infer, batchnorm_forward, batchnorm_infer,
    BatchNormCache, BatchNormParams,
};
pub use dense::{dense_backward, dense_forward, Activation, DenseGrads, DenseLayerParams};
pub use dropout::{dropout, dropout_mask2, dropout_mask3};
pub use init::glorot_uniform;
pub use loss::{l1_penalty, rmse_loss};
pub use lstm::{lstm_backward, lstm_forward, LstmCache, LstmGrads, LstmLayerParams};

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// Whether stochastic layers (dropout, batch-norm statistics) run in
/// training or inference behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Single switch point for every matrix product in the engine, so the
/// whole pipeline shares one multiplication semantics.
pub fn matmul<S: Scalar>(a: ArrayView2<'_, S>, b: ArrayView2<'_, S>) -> Array2<S> {
    a.dot(&b)
}
