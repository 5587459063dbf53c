//! Cepstral feature extraction: two-level framing (clips, then analysis
//! frames), magnitude spectra on a mel filterbank, DCT-II cepstra with
//! first and second derivatives, and per-column normalization.

mod deltas;
pub mod fft;
mod framing;
mod io;
mod mel;
mod mfcc;
mod norm;

pub use deltas::deltas;
pub use framing::{frame_segments, hamming_window, Frame};
pub use io::{read_features, read_norm_stats, write_features, write_norm_stats};
pub use mel::{mel_filterbank, mel_from_hz};
pub use mfcc::{dct_matrix, extract_features, mfcc_frame, power_spectrum, FeatureExtractor};
pub use norm::{apply_norm, fit_norm_stats};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("input produced no frames")]
    EmptyFeatures,
    #[error("malformed feature file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("feature header: {0}")]
    Header(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DspError>;

/// Framing and spectral configuration. Clips are long windows cut from each
/// speech segment; analysis frames subdivide each clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub clip_len_s: f64,
    pub clip_hop_s: f64,
    pub frame_len_s: f64,
    pub frame_hop_s: f64,
    pub n_mel: usize,
    pub n_static_ceps: usize,
    pub fft_size: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            clip_len_s: 2.5,
            clip_hop_s: 0.5,
            frame_len_s: 0.060,
            frame_hop_s: 0.030,
            n_mel: 24,
            n_static_ceps: 20,
            fft_size: 1024,
        }
    }
}

impl FrameSpec {
    /// Checks every structural invariant against a concrete sample rate.
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        if !(self.clip_len_s > 0.0 && self.clip_hop_s > 0.0) {
            return Err(DspError::Argument("clip length and hop must be positive".into()));
        }
        if self.frame_len_s > self.clip_len_s {
            return Err(DspError::Argument("frame length exceeds clip length".into()));
        }
        if !(self.frame_hop_s > 0.0 && self.frame_hop_s <= self.frame_len_s) {
            return Err(DspError::Argument("frame hop must be in (0, frame length]".into()));
        }
        if self.n_static_ceps > self.n_mel {
            return Err(DspError::Argument("more cepstra requested than mel bands".into()));
        }
        if self.n_mel < 2 {
            return Err(DspError::Argument("need at least 2 mel bands".into()));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(DspError::Argument("fft_size must be a power of two".into()));
        }
        if self.fft_size < self.frame_samples(sample_rate_hz) {
            return Err(DspError::Argument(format!(
                "fft_size {} smaller than frame of {} samples",
                self.fft_size,
                self.frame_samples(sample_rate_hz)
            )));
        }
        if self.frame_samples(sample_rate_hz) < 2 {
            return Err(DspError::Argument("frame shorter than 2 samples".into()));
        }
        Ok(())
    }

    pub fn clip_samples(&self, sample_rate_hz: u32) -> usize {
        (self.clip_len_s * f64::from(sample_rate_hz)).round() as usize
    }

    pub fn clip_hop_samples(&self, sample_rate_hz: u32) -> usize {
        (self.clip_hop_s * f64::from(sample_rate_hz)).round() as usize
    }

    pub fn frame_samples(&self, sample_rate_hz: u32) -> usize {
        (self.frame_len_s * f64::from(sample_rate_hz)).round() as usize
    }

    pub fn frame_hop_samples(&self, sample_rate_hz: u32) -> usize {
        (self.frame_hop_s * f64::from(sample_rate_hz)).round() as usize
    }

    /// Analysis frames that fit in one clip.
    pub fn frames_per_clip(&self, sample_rate_hz: u32) -> usize {
        let clip = self.clip_samples(sample_rate_hz);
        let frame = self.frame_samples(sample_rate_hz);
        let hop = self.frame_hop_samples(sample_rate_hz);
        (clip - frame) / hop + 1
    }

    /// Static + delta + delta-delta width.
    pub fn feature_dim(&self) -> usize {
        3 * self.n_static_ceps
    }

    pub fn spectrum_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }
}

/// Feature rows for one recording: `n_clips * frames_per_clip` rows of
/// `3 * n_static_ceps` columns, row-major, ordered by (segment, clip, frame).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<S: Scalar> {
    pub data: Array2<S>,
    /// (segment index, clip index within segment) per clip, in row order.
    pub clips: Vec<(u32, u32)>,
    pub frames_per_clip: usize,
    pub source_id: String,
    pub spec: FrameSpec,
    pub sample_rate_hz: u32,
}

impl<S: Scalar> FeatureMatrix<S> {
    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_clips(&self) -> usize {
        self.clips.len()
    }

    /// (source id, segment index, clip index, frame index) for a row.
    pub fn frame_origin(&self, row: usize) -> (&str, u32, u32, u32) {
        let (segment, clip) = self.clips[row / self.frames_per_clip];
        (&self.source_id, segment, clip, (row % self.frames_per_clip) as u32)
    }

    pub fn assert_finite(&self) {
        debug_assert!(
            self.data.iter().all(|v| v.is_finite()),
            "non-finite feature value"
        );
    }
}

/// Per-column mean and standard deviation fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats<S: Scalar> {
    pub mean: ndarray::Array1<S>,
    pub std: ndarray::Array1<S>,
}

impl<S: Scalar> NormStats<S> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}
