//! Waveform augmentation (noise, time shift, speed stretch, pitch shift)
//! and feature-space Gaussian corruption for robustness experiments.
//!
//! Augmenters run on raw audio before feature extraction. Corruption is the
//! one exception: it perturbs already-extracted validation features.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::audio::{AudioSignal, SegmentSet, SegmentSource};
use crate::dsp::FeatureMatrix;
use crate::rng::component_rng;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid argument: {0}")]
    Argument(String),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

/// Augmentation strengths plus the seed all stochastic techniques derive
/// their streams from.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub noise_factor: f64,
    pub pitch_factor: f64,
    pub shift_max_s: f64,
    pub speed_factor: f64,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_factor: 0.05,
            pitch_factor: 1.5,
            shift_max_s: 0.2,
            speed_factor: 1.5,
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_factor > 0.0 && self.pitch_factor > 0.0 && self.speed_factor > 0.0) {
            return Err(AugmentError::Argument("factors must be positive".into()));
        }
        if self.shift_max_s < 0.0 {
            return Err(AugmentError::Argument("shift_max_s must be non-negative".into()));
        }
        Ok(())
    }
}

/// out[i] = clamp(x[i] + factor * g[i], -1, 1) with g standard normal.
pub fn inject_noise(signal: &AudioSignal, factor: f64, rng: &mut ChaCha8Rng) -> AudioSignal {
    let samples = signal
        .samples
        .iter()
        .map(|&x| {
            let g: f64 = rng.sample(StandardNormal);
            (f64::from(x) + factor * g).clamp(-1.0, 1.0) as f32
        })
        .collect();
    AudioSignal::new(samples, signal.sample_rate_hz)
}

/// Shifts left or right by a uniform draw in [-shift_max_s, +shift_max_s],
/// zero-filling the vacated end. Length is preserved.
pub fn shift_time(
    signal: &AudioSignal,
    shift_max_s: f64,
    rng: &mut ChaCha8Rng,
) -> Result<AudioSignal> {
    let n = signal.len();
    let max_samples = shift_max_s * f64::from(signal.sample_rate_hz);
    if max_samples >= n as f64 {
        return Err(AugmentError::Argument(format!(
            "shift range {max_samples} samples covers the whole {n}-sample signal"
        )));
    }
    let shift_s = if shift_max_s == 0.0 {
        0.0
    } else {
        rng.gen_range(-shift_max_s..=shift_max_s)
    };
    let k = (shift_s * f64::from(signal.sample_rate_hz)).round() as i64;
    Ok(shift_by_samples(signal, k))
}

fn shift_by_samples(signal: &AudioSignal, k: i64) -> AudioSignal {
    let n = signal.len();
    let mut samples = vec![0.0f32; n];
    if k >= 0 {
        let k = (k as usize).min(n);
        samples[k..].copy_from_slice(&signal.samples[..n - k]);
    } else {
        let k = ((-k) as usize).min(n);
        samples[..n - k].copy_from_slice(&signal.samples[k..]);
    }
    AudioSignal::new(samples, signal.sample_rate_hz)
}

/// Resamples by linear interpolation at positions i * factor. The sample
/// rate label is unchanged, so playback is faster and shorter for
/// factor > 1. Output length: floor((n-1)/factor) + 1.
pub fn stretch_speed(signal: &AudioSignal, speed_factor: f64) -> AudioSignal {
    assert!(speed_factor > 0.0, "speed factor must be positive");
    let n = signal.len();
    if n == 0 {
        return signal.clone();
    }
    let out_len = ((n - 1) as f64 / speed_factor).floor() as usize + 1;
    let samples = (0..out_len)
        .map(|i| {
            let p = i as f64 * speed_factor;
            let k = p.floor() as usize;
            let a = p - k as f64;
            let right = if k + 1 < n { signal.samples[k + 1] } else { signal.samples[k] };
            ((1.0 - a) * f64::from(signal.samples[k]) + a * f64::from(right)) as f32
        })
        .collect();
    AudioSignal::new(samples, signal.sample_rate_hz)
}

/// Grain length for the overlap-add re-stretch inside [`shift_pitch`].
const GRAIN_SECONDS: f64 = 0.05;

/// Scales frequency content by `pitch_factor` while keeping the duration:
/// speed-stretch (which transposes), then a phase-free granular
/// overlap-add stretch back to the original length (which does not).
pub fn shift_pitch(signal: &AudioSignal, pitch_factor: f64) -> AudioSignal {
    assert!(pitch_factor > 0.0, "pitch factor must be positive");
    let transposed = stretch_speed(signal, pitch_factor);
    ola_stretch(&transposed, signal.len())
}

/// Time-stretches to `target_len` by overlap-adding periodic-Hann grains
/// (50% overlap). Each grain's source position starts from the linear
/// time-map and is then nudged within a small tolerance to best continue
/// the previous grain's waveform, so overlaps add coherently instead of
/// cancelling. Accumulated window weight renormalizes the edges.
fn ola_stretch(signal: &AudioSignal, target_len: usize) -> AudioSignal {
    let n = signal.len();
    let grain = (GRAIN_SECONDS * f64::from(signal.sample_rate_hz)).round() as usize;
    if n <= grain || target_len <= grain || n < 2 {
        // Too short for granulation: plain interpolation resize.
        return resize_linear(signal, target_len);
    }
    let hop = grain / 2;
    let tol = (hop / 2) as i64;
    // Periodic Hann: w[i] + w[i + hop] = 1, so interior weights are exact.
    let window: Vec<f64> = (0..grain)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / grain as f64).cos())
        .collect();
    // Regular grid of output grain starts, plus one final grain flush with
    // the end so no output sample maps through a truncated window.
    let mut starts: Vec<usize> =
        (0..).map(|g| g * hop).take_while(|&s| s + grain < target_len).collect();
    starts.push(target_len - grain);

    let ratio = (n - grain) as f64 / (target_len - grain).max(1) as f64;
    let x = &signal.samples;
    let mut acc = vec![0.0f64; target_len];
    let mut weight = vec![0.0f64; target_len];
    let (mut prev_out, mut prev_in) = (0usize, 0usize);
    for (g, &out_start) in starts.iter().enumerate() {
        let nominal = (out_start as f64 * ratio).round() as i64;
        let in_start = if g == 0 {
            nominal.clamp(0, (n - grain) as i64) as usize
        } else {
            let delta_out = out_start - prev_out;
            let expect = prev_in + delta_out;
            let overlap = grain.saturating_sub(delta_out).min(n.saturating_sub(expect));
            let lo = (nominal - tol).max(0);
            let hi = (nominal + tol).min((n - grain) as i64);
            if overlap == 0 || lo > hi {
                nominal.clamp(0, (n - grain) as i64) as usize
            } else {
                let mut best = (f64::NEG_INFINITY, lo as usize);
                for q in lo..=hi {
                    let q = q as usize;
                    let score: f64 = (0..overlap)
                        .map(|i| f64::from(x[expect + i]) * f64::from(x[q + i]))
                        .sum();
                    if score > best.0 {
                        best = (score, q);
                    }
                }
                best.1
            }
        };
        for i in 0..grain {
            acc[out_start + i] += window[i] * f64::from(x[in_start + i]);
            weight[out_start + i] += window[i];
        }
        prev_out = out_start;
        prev_in = in_start;
    }
    let samples = acc
        .iter()
        .zip(&weight)
        .map(|(&a, &w)| if w > 1e-8 { (a / w) as f32 } else { 0.0 })
        .collect();
    AudioSignal::new(samples, signal.sample_rate_hz)
}

fn resize_linear(signal: &AudioSignal, target_len: usize) -> AudioSignal {
    let n = signal.len();
    if n == 0 || target_len == 0 {
        return AudioSignal::new(vec![0.0; target_len], signal.sample_rate_hz);
    }
    let samples = (0..target_len)
        .map(|i| {
            let p = if target_len == 1 {
                0.0
            } else {
                i as f64 * (n - 1) as f64 / (target_len - 1) as f64
            };
            let k = p.floor() as usize;
            let a = p - k as f64;
            let right = if k + 1 < n { signal.samples[k + 1] } else { signal.samples[k] };
            ((1.0 - a) * f64::from(signal.samples[k]) + a * f64::from(right)) as f32
        })
        .collect();
    AudioSignal::new(samples, signal.sample_rate_hz)
}

/// Expands a segment set to 5x: originals, then one block per technique in
/// a fixed order (noise, pitch, shift, speed). Stochastic techniques draw
/// from streams derived per (technique, segment), so output is a pure
/// function of (input, seed).
pub fn augment_dataset(segments: &SegmentSet, cfg: &AugmentConfig) -> Result<SegmentSet> {
    cfg.validate()?;
    let n = segments.len();
    let mut out_segments = Vec::with_capacity(n * 5);
    let mut provenance = Vec::with_capacity(n * 5);
    out_segments.extend(segments.segments.iter().cloned());
    provenance.extend(segments.provenance.iter().copied());

    for (i, seg) in segments.segments.iter().enumerate() {
        let mut rng = component_rng(cfg.rng_seed, "noise", i as u64);
        out_segments.push(inject_noise(seg, cfg.noise_factor, &mut rng));
        provenance.push(SegmentSource::NoiseInjected);
    }
    for seg in &segments.segments {
        out_segments.push(shift_pitch(seg, cfg.pitch_factor));
        provenance.push(SegmentSource::PitchShifted);
    }
    for (i, seg) in segments.segments.iter().enumerate() {
        let mut rng = component_rng(cfg.rng_seed, "shift", i as u64);
        // Short segments cannot absorb the full shift range; cap it so the
        // draw stays inside the signal.
        let cap = (seg.len().saturating_sub(1)) as f64 / f64::from(seg.sample_rate_hz);
        out_segments.push(shift_time(seg, cfg.shift_max_s.min(cap), &mut rng)?);
        provenance.push(SegmentSource::TimeShifted);
    }
    for seg in &segments.segments {
        out_segments.push(stretch_speed(seg, cfg.speed_factor));
        provenance.push(SegmentSource::SpeedStretched);
    }
    Ok(SegmentSet {
        segments: out_segments,
        provenance,
        source_id: segments.source_id.clone(),
        sample_rate_hz: segments.sample_rate_hz,
    })
}

/// Adds N(0, sigma^2) noise to `round(fraction * rows)` uniformly chosen
/// rows. Used on validation features for the noise-robustness experiment.
pub fn corrupt_gaussian<S: Scalar>(
    features: &FeatureMatrix<S>,
    fraction: f64,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<FeatureMatrix<S>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(AugmentError::Argument(format!("fraction {fraction} outside [0, 1]")));
    }
    let n = features.data.nrows();
    let k = (fraction * n as f64).round() as usize;
    let mut rows: Vec<usize> = sample_indices(rng, n, k).into_vec();
    rows.sort_unstable();
    let mut out = features.clone();
    for row in rows {
        for v in out.data.row_mut(row) {
            let g: f64 = rng.sample(StandardNormal);
            *v += S::of_f64(sigma * g);
        }
    }
    Ok(out)
}
