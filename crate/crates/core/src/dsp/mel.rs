//! Triangular mel-scale filterbank over FFT magnitude bins.

use ndarray::Array2;

use crate::Scalar;

use super::FrameSpec;

/// mel(f) = 2595 * log10(1 + f/700).
pub fn mel_from_hz(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn hz_from_mel(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Builds an `n_mel x (fft_size/2 + 1)` filterbank. Filter centers are
/// equally spaced on the mel scale between 0 Hz and the Nyquist frequency;
/// each triangle is linear in Hz, non-negative, and peaks at 1.
pub fn mel_filterbank<S: Scalar>(spec: &FrameSpec, sample_rate_hz: u32) -> Array2<S> {
    let n_bins = spec.spectrum_bins();
    let nyquist = f64::from(sample_rate_hz) / 2.0;
    let mel_max = mel_from_hz(nyquist);
    // n_mel + 2 edge points; filter i spans points i-1 .. i+1.
    let points: Vec<f64> = (0..spec.n_mel + 2)
        .map(|i| hz_from_mel(mel_max * i as f64 / (spec.n_mel + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((spec.n_mel, n_bins));
    for filter in 0..spec.n_mel {
        let (left, center, right) = (points[filter], points[filter + 1], points[filter + 2]);
        for bin in 0..n_bins {
            let hz = bin as f64 * f64::from(sample_rate_hz) / spec.fft_size as f64;
            let weight = if hz >= left && hz <= center {
                (hz - left) / (center - left)
            } else if hz > center && hz <= right {
                (right - hz) / (right - center)
            } else {
                0.0
            };
            if weight > 0.0 {
                fb[(filter, bin)] = S::of_f64(weight);
            }
        }
    }
    fb
}
