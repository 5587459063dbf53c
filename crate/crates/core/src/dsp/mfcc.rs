//! Frame spectra, cepstra, and full feature-matrix extraction.

use ndarray::{Array1, Array2};

use crate::audio::SegmentSet;
use crate::Scalar;

use super::deltas::deltas;
use super::fft::Fft;
use super::framing::{frame_segments, hamming_window};
use super::mel::mel_filterbank;
use super::{DspError, FeatureMatrix, FrameSpec, Result};

/// Floor applied to filterbank energies before the log.
const LOG_FLOOR: f64 = 1e-10;

/// Orthonormal DCT-II matrix, `n_out x n_in` (the first `n_out` basis rows).
pub fn dct_matrix<S: Scalar>(n_out: usize, n_in: usize) -> Array2<S> {
    assert!(n_out <= n_in && n_in >= 1);
    let scale0 = (1.0 / n_in as f64).sqrt();
    let scale = (2.0 / n_in as f64).sqrt();
    Array2::from_shape_fn((n_out, n_in), |(k, n)| {
        let basis = (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64
            / (2.0 * n_in as f64))
            .cos();
        S::of_f64(if k == 0 { scale0 } else { scale } * basis)
    })
}

/// Hamming-windows the frame, zero-pads to `fft_size`, and returns the
/// magnitude spectrum |X[k]| for k = 0 ..= fft_size/2.
pub fn power_spectrum<S: Scalar>(frame: &[S], spec: &FrameSpec) -> Vec<S> {
    let window = hamming_window::<S>(frame.len()).expect("frame shorter than 2 samples");
    let fft = Fft::new(spec.fft_size);
    spectrum_with(frame, &window, &fft)
}

fn spectrum_with<S: Scalar>(frame: &[S], window: &[S], fft: &Fft<S>) -> Vec<S> {
    assert!(frame.len() <= fft.len(), "frame longer than FFT size");
    assert_eq!(frame.len(), window.len());
    let n = fft.len();
    let mut re = vec![S::zero(); n];
    let mut im = vec![S::zero(); n];
    for (dst, (&x, &w)) in re.iter_mut().zip(frame.iter().zip(window)) {
        *dst = x * w;
    }
    fft.forward(&mut re, &mut im);
    (0..=n / 2)
        .map(|k| (re[k] * re[k] + im[k] * im[k]).sqrt())
        .collect()
}

/// Static cepstra for one frame: DCT-II of the floored log filterbank
/// energies, first `n_static_ceps` coefficients (c0 included).
pub fn mfcc_frame<S: Scalar>(frame: &[S], filterbank: &Array2<S>, spec: &FrameSpec) -> Vec<S> {
    let spectrum = Array1::from_vec(power_spectrum(frame, spec));
    let dct = dct_matrix::<S>(spec.n_static_ceps, spec.n_mel);
    cepstra_from_spectrum(&spectrum, filterbank, &dct).to_vec()
}

fn cepstra_from_spectrum<S: Scalar>(
    spectrum: &Array1<S>,
    filterbank: &Array2<S>,
    dct: &Array2<S>,
) -> Array1<S> {
    let floor = S::of_f64(LOG_FLOOR);
    let mut energies = filterbank.dot(spectrum);
    energies.mapv_inplace(|e| e.max(floor).ln());
    dct.dot(&energies)
}

/// Reusable extraction pipeline: window, FFT plan, filterbank, and DCT
/// basis are built once per (spec, sample rate).
pub struct FeatureExtractor<S: Scalar> {
    spec: FrameSpec,
    sample_rate_hz: u32,
    window: Vec<S>,
    filterbank: Array2<S>,
    dct: Array2<S>,
    fft: Fft<S>,
}

impl<S: Scalar> FeatureExtractor<S> {
    pub fn new(spec: FrameSpec, sample_rate_hz: u32) -> Result<Self> {
        spec.validate(sample_rate_hz)?;
        let window = hamming_window(spec.frame_samples(sample_rate_hz))?;
        let filterbank = mel_filterbank(&spec, sample_rate_hz);
        let dct = dct_matrix(spec.n_static_ceps, spec.n_mel);
        let fft = Fft::new(spec.fft_size);
        Ok(Self { spec, sample_rate_hz, window, filterbank, dct, fft })
    }

    pub fn spec(&self) -> &FrameSpec {
        &self.spec
    }

    /// Extracts the `[static | delta | delta-delta]` matrix for one
    /// recording's segments. Derivatives are regressed within each clip, so
    /// rows never mix discontiguous audio.
    pub fn extract(&self, segments: &SegmentSet) -> Result<FeatureMatrix<S>> {
        if segments.sample_rate_hz != self.sample_rate_hz {
            return Err(DspError::Argument(format!(
                "extractor built for {} Hz, segments are {} Hz",
                self.sample_rate_hz, segments.sample_rate_hz
            )));
        }
        let frames = frame_segments::<S>(segments, &self.spec)?;
        if frames.is_empty() {
            return Err(DspError::EmptyFeatures);
        }
        let fpc = self.spec.frames_per_clip(self.sample_rate_hz);
        debug_assert_eq!(frames.len() % fpc, 0);
        let n_clips = frames.len() / fpc;
        let n_ceps = self.spec.n_static_ceps;

        let mut data = Array2::zeros((frames.len(), 3 * n_ceps));
        let mut clips = Vec::with_capacity(n_clips);
        let mut static_block = Array2::zeros((fpc, n_ceps));
        for (clip_no, clip_frames) in frames.chunks(fpc).enumerate() {
            clips.push((clip_frames[0].segment_index, clip_frames[0].clip_index));
            for (f, frame) in clip_frames.iter().enumerate() {
                let spectrum =
                    Array1::from_vec(spectrum_with(&frame.samples, &self.window, &self.fft));
                let ceps = cepstra_from_spectrum(&spectrum, &self.filterbank, &self.dct);
                static_block.row_mut(f).assign(&ceps);
            }
            let delta = deltas(&static_block);
            let delta2 = deltas(&delta);
            for f in 0..fpc {
                let row = clip_no * fpc + f;
                for j in 0..n_ceps {
                    data[(row, j)] = static_block[(f, j)];
                    data[(row, n_ceps + j)] = delta[(f, j)];
                    data[(row, 2 * n_ceps + j)] = delta2[(f, j)];
                }
            }
        }
        let matrix = FeatureMatrix {
            data,
            clips,
            frames_per_clip: fpc,
            source_id: segments.source_id.clone(),
            spec: self.spec.clone(),
            sample_rate_hz: self.sample_rate_hz,
        };
        matrix.assert_finite();
        Ok(matrix)
    }
}

/// One-shot extraction; builds a [`FeatureExtractor`] internally.
pub fn extract_features<S: Scalar>(
    segments: &SegmentSet,
    spec: &FrameSpec,
) -> Result<FeatureMatrix<S>> {
    FeatureExtractor::new(spec.clone(), segments.sample_rate_hz)?.extract(segments)
}
