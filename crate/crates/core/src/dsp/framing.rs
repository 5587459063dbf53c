//! Two-level framing: speech segments are chunked into fixed-length clips,
//! and each clip is subdivided into short analysis frames.

use crate::audio::SegmentSet;
use crate::Scalar;

use super::{DspError, FrameSpec, Result};

/// One analysis frame with its position in the (segment, clip, frame)
/// hierarchy.
#[derive(Debug, Clone)]
pub struct Frame<S: Scalar> {
    pub segment_index: u32,
    pub clip_index: u32,
    pub frame_index: u32,
    pub samples: Vec<S>,
}

/// Hamming window: w[k] = 0.54 - 0.46*cos(2*pi*k/(n-1)).
pub fn hamming_window<S: Scalar>(n: usize) -> Result<Vec<S>> {
    if n < 2 {
        return Err(DspError::Argument(format!("window length {n} below 2")));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * (k as f64) / denom;
            S::of_f64(0.54 - 0.46 * angle.cos())
        })
        .collect())
}

/// Chunks one segment into clip start offsets plus a flag for the final
/// zero-padded clip. Full clips step by the clip hop; the first start where
/// the clip would run past the end keeps a zero-padded clip when at least
/// half of it is real samples, and is dropped otherwise.
fn clip_starts(segment_len: usize, clip_len: usize, hop: usize) -> Vec<(usize, bool)> {
    let mut starts = Vec::new();
    let mut s = 0usize;
    loop {
        if s + clip_len < segment_len {
            starts.push((s, false));
        } else {
            if (segment_len - s) * 2 >= clip_len {
                starts.push((s, true));
            }
            break;
        }
        s += hop;
    }
    starts
}

/// Frames every segment of a set, in (segment, clip, frame) order. Clips
/// shorter than half the clip length are dropped; the rest are zero-padded
/// to full length before subdivision.
pub fn frame_segments<S: Scalar>(segments: &SegmentSet, spec: &FrameSpec) -> Result<Vec<Frame<S>>> {
    spec.validate(segments.sample_rate_hz)?;
    let rate = segments.sample_rate_hz;
    let clip_len = spec.clip_samples(rate);
    let clip_hop = spec.clip_hop_samples(rate);
    let frame_len = spec.frame_samples(rate);
    let frame_hop = spec.frame_hop_samples(rate);
    let frames_per_clip = spec.frames_per_clip(rate);

    let mut frames = Vec::new();
    let mut clip_buf = vec![S::zero(); clip_len];
    for (seg_idx, segment) in segments.segments.iter().enumerate() {
        for (clip_idx, (start, padded)) in
            clip_starts(segment.len(), clip_len, clip_hop).into_iter().enumerate()
        {
            let available = if padded { segment.len() - start } else { clip_len };
            for (dst, &src) in clip_buf[..available]
                .iter_mut()
                .zip(&segment.samples[start..start + available])
            {
                *dst = S::of_f64(f64::from(src));
            }
            clip_buf[available..].fill(S::zero());
            for frame_idx in 0..frames_per_clip {
                let at = frame_idx * frame_hop;
                frames.push(Frame {
                    segment_index: seg_idx as u32,
                    clip_index: clip_idx as u32,
                    frame_index: frame_idx as u32,
                    samples: clip_buf[at..at + frame_len].to_vec(),
                });
            }
        }
    }
    Ok(frames)
}
