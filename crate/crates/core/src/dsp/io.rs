//! On-disk feature formats. Both `.fmx` (feature matrices) and `.nrm`
//! (normalization stats) are one line of compact JSON followed by a
//! little-endian 32-bit float payload. Feature files hold raw, un-normalized
//! values; stats are applied at load time by consumers.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::Scalar;

use super::{DspError, FeatureMatrix, FrameSpec, NormStats, Result};

#[derive(Serialize, Deserialize)]
struct FeatureHeader {
    shape: [usize; 2],
    frame_spec: FrameSpec,
    sample_rate_hz: u32,
    source_id: String,
    frames_per_clip: usize,
    clips: Vec<(u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct NormHeader {
    dim: usize,
}

fn split_header(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| DspError::Format("missing header line".into()))?;
    Ok((&bytes[..newline], &bytes[newline + 1..]))
}

fn payload_to_f32(payload: &[u8], expected: usize) -> Result<Vec<f32>> {
    if payload.len() != expected * 4 {
        return Err(DspError::Format(format!(
            "payload holds {} bytes, header promises {}",
            payload.len(),
            expected * 4
        )));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

pub fn write_features<S: Scalar>(path: impl AsRef<Path>, features: &FeatureMatrix<S>) -> Result<()> {
    let header = FeatureHeader {
        shape: [features.data.nrows(), features.data.ncols()],
        frame_spec: features.spec.clone(),
        sample_rate_hz: features.sample_rate_hz,
        source_id: features.source_id.clone(),
        frames_per_clip: features.frames_per_clip,
        clips: features.clips.clone(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(features.data.len() * 4);
    for v in features.data.iter() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_features<S: Scalar>(path: impl AsRef<Path>) -> Result<FeatureMatrix<S>> {
    let bytes = fs::read(path)?;
    let (header_bytes, payload) = split_header(&bytes)?;
    let header: FeatureHeader = serde_json::from_slice(header_bytes)?;
    let [rows, cols] = header.shape;
    if rows != header.clips.len() * header.frames_per_clip {
        return Err(DspError::Format("row count disagrees with clip list".into()));
    }
    if cols != header.frame_spec.feature_dim() {
        return Err(DspError::Format("column count disagrees with frame spec".into()));
    }
    let values = payload_to_f32(payload, rows * cols)?;
    let data = Array2::from_shape_vec(
        (rows, cols),
        values.into_iter().map(|v| S::of_f64(f64::from(v))).collect(),
    )
    .expect("shape already checked");
    Ok(FeatureMatrix {
        data,
        clips: header.clips,
        frames_per_clip: header.frames_per_clip,
        source_id: header.source_id,
        spec: header.frame_spec,
        sample_rate_hz: header.sample_rate_hz,
    })
}

pub fn write_norm_stats<S: Scalar>(path: impl AsRef<Path>, stats: &NormStats<S>) -> Result<()> {
    let mut out = serde_json::to_vec(&NormHeader { dim: stats.dim() })?;
    out.push(b'\n');
    for v in stats.mean.iter().chain(stats.std.iter()) {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_norm_stats<S: Scalar>(path: impl AsRef<Path>) -> Result<NormStats<S>> {
    let bytes = fs::read(path)?;
    let (header_bytes, payload) = split_header(&bytes)?;
    let header: NormHeader = serde_json::from_slice(header_bytes)?;
    let values = payload_to_f32(payload, header.dim * 2)?;
    let to_s = |slice: &[f32]| {
        Array1::from_iter(slice.iter().map(|&v| S::of_f64(f64::from(v))))
    };
    Ok(NormStats {
        mean: to_s(&values[..header.dim]),
        std: to_s(&values[header.dim..]),
    })
}
