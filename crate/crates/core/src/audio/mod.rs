//! Audio ingestion: WAV decode/encode, interview transcripts, and
//! participant-only segment extraction.

mod segments;
mod transcript;
mod wav;

pub use segments::extract_participant_segments;
pub use transcript::parse_transcript;
pub use wav::{decode_wav, encode_wav};

use thiserror::Error;

/// Minimum useful segment length; anything shorter cannot fill a single
/// analysis frame and is dropped during extraction.
pub const MIN_SEGMENT_SECONDS: f64 = 0.1;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV: {0}")]
    Format(String),
    #[error("unsupported WAV encoding: {0}")]
    Unsupported(String),
    #[error("transcript line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no participant speech segments after extraction")]
    EmptySegments,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AudioError>;

/// Mono PCM sample buffer with its sample rate. Samples are normalized to
/// `[-1.0, 1.0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32) -> Self {
        assert!(sample_rate_hz > 0, "sample rate must be positive");
        Self { samples, sample_rate_hz }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }
}

/// Who is talking in a transcript turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speaker {
    Participant,
    Interviewer,
}

/// One diarized turn of an interview transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptTurn {
    pub start_s: f64,
    pub stop_s: f64,
    pub speaker: Speaker,
}

/// Which augmentation (if any) produced a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentSource {
    Original,
    NoiseInjected,
    PitchShifted,
    TimeShifted,
    SpeedStretched,
}

impl SegmentSource {
    pub fn tag(self) -> &'static str {
        match self {
            SegmentSource::Original => "original",
            SegmentSource::NoiseInjected => "noise",
            SegmentSource::PitchShifted => "pitch",
            SegmentSource::TimeShifted => "shift",
            SegmentSource::SpeedStretched => "speed",
        }
    }
}

/// Ordered participant speech segments cut from one recording. All segments
/// share the source recording's sample rate; `provenance` parallels
/// `segments` and records which augmenter (if any) produced each one.
#[derive(Debug, Clone)]
pub struct SegmentSet {
    pub segments: Vec<AudioSignal>,
    pub provenance: Vec<SegmentSource>,
    pub source_id: String,
    pub sample_rate_hz: u32,
}

impl SegmentSet {
    pub fn new(segments: Vec<AudioSignal>, source_id: impl Into<String>, sample_rate_hz: u32) -> Self {
        debug_assert!(segments.iter().all(|s| s.sample_rate_hz == sample_rate_hz));
        let provenance = vec![SegmentSource::Original; segments.len()];
        Self { segments, provenance, source_id: source_id.into(), sample_rate_hz }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Total samples across all segments.
    pub fn total_samples(&self) -> usize {
        self.segments.iter().map(AudioSignal::len).sum()
    }
}
