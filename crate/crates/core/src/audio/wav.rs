//! Minimal RIFF/WAVE codec: reads 16-bit PCM and 32-bit float, mono or
//! stereo (stereo is downmixed by averaging), and writes 16-bit PCM mono.

use std::fs;
use std::path::Path;

use super::{AudioError, AudioSignal, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct FmtChunk {
    format_tag: u16,
    channels: u16,
    sample_rate_hz: u32,
    bits_per_sample: u16,
}

fn read_u16(bytes: &[u8], at: usize) -> Result<u16> {
    let raw: [u8; 2] = bytes
        .get(at..at + 2)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| AudioError::Format("truncated chunk".into()))?;
    Ok(u16::from_le_bytes(raw))
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let raw: [u8; 4] = bytes
        .get(at..at + 4)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| AudioError::Format("truncated chunk".into()))?;
    Ok(u32::from_le_bytes(raw))
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(AudioError::Format("fmt chunk shorter than 16 bytes".into()));
    }
    let mut format_tag = read_u16(body, 0)?;
    let channels = read_u16(body, 2)?;
    let sample_rate_hz = read_u32(body, 4)?;
    let bits_per_sample = read_u16(body, 14)?;
    if format_tag == FORMAT_EXTENSIBLE {
        // WAVE_FORMAT_EXTENSIBLE stores the real format in the first two
        // bytes of the SubFormat GUID at offset 24.
        if body.len() < 26 {
            return Err(AudioError::Format("extensible fmt chunk too short".into()));
        }
        format_tag = read_u16(body, 24)?;
    }
    Ok(FmtChunk { format_tag, channels, sample_rate_hz, bits_per_sample })
}

fn decode_samples(fmt: &FmtChunk, data: &[u8]) -> Result<Vec<f32>> {
    let interleaved: Vec<f32> = match (fmt.format_tag, fmt.bits_per_sample) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|b| f32::from(i16::from_le_bytes([b[0], b[1]])) / 32768.0)
            .collect(),
        (FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]).clamp(-1.0, 1.0))
            .collect(),
        (tag, bits) => {
            return Err(AudioError::Unsupported(format!(
                "format tag {tag} with {bits} bits per sample"
            )))
        }
    };
    match fmt.channels {
        1 => Ok(interleaved),
        2 => Ok(interleaved
            .chunks_exact(2)
            .map(|lr| (lr[0] + lr[1]) * 0.5)
            .collect()),
        n => Err(AudioError::Unsupported(format!("{n} channels"))),
    }
}

/// Decodes a WAV file into normalized mono samples. Unknown chunks are
/// skipped (with the RIFF even-byte padding rule).
pub fn decode_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Format("missing RIFF/WAVE header".into()));
    }
    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = read_u32(&bytes, at + 4)? as usize;
        let body_start = at + 8;
        let body_end = body_start + size;
        if body_end > bytes.len() {
            return Err(AudioError::Format("chunk overruns file".into()));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body)?),
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunk bodies are padded to even length.
        at = body_end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| AudioError::Format("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::Format("no data chunk".into()))?;
    if fmt.sample_rate_hz == 0 {
        return Err(AudioError::Format("zero sample rate".into()));
    }
    let samples = decode_samples(&fmt, data)?;
    Ok(AudioSignal::new(samples, fmt.sample_rate_hz))
}

/// Encodes mono samples as 16-bit PCM. Values are clamped to `[-1.0, 1.0]`
/// before quantization, with `1.0 -> 32767` and `-1.0 -> -32768`.
pub fn encode_wav(path: impl AsRef<Path>, signal: &AudioSignal) -> Result<()> {
    let data_len = signal.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&signal.sample_rate_hz.to_le_bytes());
    let byte_rate = signal.sample_rate_hz * 2;
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &signal.samples {
        let q = (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}
