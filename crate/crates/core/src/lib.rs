//! Speech depression recognition from interview audio.
//!
//! The pipeline cuts participant-only speech out of clinical interview
//! recordings, turns it into normalized 60-dimensional MFCC feature
//! matrices, and trains a stacked-LSTM network to predict either a binary
//! depression label or a 24-level severity score. Training data can be
//! expanded by waveform augmentation or by transferring weights from an
//! emotion-recognition pretraining run.
//!
//! Numeric code is generic over the scalar type (`f32`/`f64`) through the
//! [`Scalar`] trait: training and persisted artifacts use `f32`, while
//! gradient and reference checks instantiate the same code at `f64`.
//! Concrete aliases for the common `f32` pipeline types live at the crate
//! root.

pub mod audio;
pub mod augment;
pub mod config;
pub mod dataset;
pub mod dsp;
pub mod eval;
pub mod manifest;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod synth;

pub use scalar::Scalar;

/// Feature matrix carrying `f32` coefficients, the training representation.
pub type FeatureMatrix32 = dsp::FeatureMatrix<f32>;
/// Feature matrix at `f64`, used by reference and oracle checks.
pub type FeatureMatrix64 = dsp::FeatureMatrix<f64>;
/// Normalization statistics for the `f32` pipeline.
pub type NormStats32 = dsp::NormStats<f32>;
// TODO(model): restore once the network lands.
// pub type Network32 = model::Network<f32>;
// pub type Network64 = model::Network<f64>;
