//! Cuts participant-only speech segments out of a full interview recording.

use super::{
    AudioError, AudioSignal, Result, SegmentSet, Speaker, TranscriptTurn, MIN_SEGMENT_SECONDS,
};

/// Extracts the participant's turns as separate segments, in transcript
/// order. Boundaries are rounded to the nearest sample and clamped to the
/// recording; segments shorter than [`MIN_SEGMENT_SECONDS`] are dropped.
/// Returns an error if nothing usable remains.
pub fn extract_participant_segments(
    signal: &AudioSignal,
    turns: &[TranscriptTurn],
    source_id: impl Into<String>,
) -> Result<SegmentSet> {
    let rate = f64::from(signal.sample_rate_hz);
    let min_len = (MIN_SEGMENT_SECONDS * rate).round() as usize;
    let mut segments = Vec::new();
    for turn in turns {
        if turn.speaker != Speaker::Participant {
            continue;
        }
        let start = ((turn.start_s * rate).round() as usize).min(signal.samples.len());
        let stop = ((turn.stop_s * rate).round() as usize).min(signal.samples.len());
        if stop.saturating_sub(start) < min_len.max(1) {
            continue;
        }
        segments.push(AudioSignal::new(
            signal.samples[start..stop].to_vec(),
            signal.sample_rate_hz,
        ));
    }
    if segments.is_empty() {
        return Err(AudioError::EmptySegments);
    }
    Ok(SegmentSet::new(segments, source_id, signal.sample_rate_hz))
}
