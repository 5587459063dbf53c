//! Tab-separated interview transcripts: `start<TAB>stop<TAB>speaker<TAB>utterance`
//! with one header line.

use std::fs;
use std::path::Path;

use super::{AudioError, Result, Speaker, TranscriptTurn};

fn parse_speaker(raw: &str, line: usize) -> Result<Speaker> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "participant" => Ok(Speaker::Participant),
        "ellie" | "interviewer" => Ok(Speaker::Interviewer),
        other => Err(AudioError::Parse {
            line,
            message: format!("unknown speaker {other:?}"),
        }),
    }
}

fn parse_time(raw: &str, line: usize, what: &str) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| AudioError::Parse {
        line,
        message: format!("invalid {what} time {raw:?}"),
    })?;
    if !value.is_finite() || value < 0.0 {
        return Err(AudioError::Parse {
            line,
            message: format!("{what} time {value} out of range"),
        });
    }
    Ok(value)
}

/// Parses a transcript file into turns sorted by start time. The first line
/// is a header and is skipped; blank lines are ignored. Overlapping turns
/// (after sorting) are rejected.
pub fn parse_transcript(path: impl AsRef<Path>) -> Result<Vec<TranscriptTurn>> {
    let text = fs::read_to_string(path)?;
    let mut turns = Vec::new();
    for (index, raw_line) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw_line.trim_end_matches('\r');
        if index == 0 || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(4, '\t');
        let start = fields.next().unwrap_or_default();
        let stop = fields.next().ok_or_else(|| AudioError::Parse {
            line: line_no,
            message: "expected 4 tab-separated fields".into(),
        })?;
        let speaker = fields.next().ok_or_else(|| AudioError::Parse {
            line: line_no,
            message: "expected 4 tab-separated fields".into(),
        })?;
        // The utterance field is free text; it may be empty.
        let _utterance = fields.next().unwrap_or_default();
        let start_s = parse_time(start, line_no, "start")?;
        let stop_s = parse_time(stop, line_no, "stop")?;
        if stop_s <= start_s {
            return Err(AudioError::Parse {
                line: line_no,
                message: format!("stop {stop_s} not after start {start_s}"),
            });
        }
        turns.push(TranscriptTurn {
            start_s,
            stop_s,
            speaker: parse_speaker(speaker, line_no)?,
        });
    }
    turns.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    for pair in turns.windows(2) {
        if pair[1].start_s < pair[0].stop_s {
            return Err(AudioError::Parse {
                line: 0,
                message: format!(
                    "turns overlap: [{}, {}] and [{}, {}]",
                    pair[0].start_s, pair[0].stop_s, pair[1].start_s, pair[1].stop_s
                ),
            });
        }
    }
    Ok(turns)
}
