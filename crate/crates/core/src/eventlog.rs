//! `session-log.v1`: one JSON object per line, timestamps from the session clock.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::composer::Key;
use crate::paradigm::{Timing, N_CODES};
use crate::suggest::Provenance;
use crate::swlda::TrainedModel;

pub const LOG_FORMAT: &str = "session-log.v1";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: timestamp {t_ms} earlier than previous {prev}")]
    NonMonotone { line: usize, t_ms: u64, prev: u64 },
    #[error("unsupported log format {0:?}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Finished,
    StepCap,
    PolicyExhausted,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Header {
        format: String,
        mode: String,
        seed: u64,
        timing: Timing,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<TrainedModel>,
    },
    SentenceStart {
        #[serde(default)]
        target: Option<String>,
    },
    /// Calibration cue; no EEG consequence.
    Cue { key: Key, duration_ms: u64 },
    TrialStart {
        trial: usize,
        #[serde(default)]
        intended: Option<Key>,
        /// Slots frozen for this trial.
        slots: Vec<String>,
    },
    Flash { trial: usize, seq: usize, code: u8, on: bool },
    /// Decimated epoch for one flash, kept for replay.
    Features { trial: usize, seq: usize, code: u8, values: Vec<f64> },
    /// Classifier output for every code after one repetition.
    Score { trial: usize, seq: usize, scores: [f64; N_CODES] },
    Selection {
        trial: usize,
        key: Key,
        #[serde(default)]
        intended: Option<Key>,
        #[serde(default)]
        correct: Option<bool>,
        #[serde(default)]
        cumulative: Option<[f64; N_CODES]>,
        composed_after: String,
        /// Slots displayed while this selection was made.
        #[serde(default)]
        shown: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warning: Option<String>,
    },
    SuggestionSet {
        partial: String,
        candidates: Vec<String>,
        provenance: Provenance,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        request: Option<Value>,
    },
    /// `composer.v1` snapshot.
    Compose { composed: String, display: String, slots: Vec<String>, finished: bool },
    Validation { trial: usize, key: Key, selected: Key, correct: bool, run: usize, passed: bool },
    SessionEnd { reason: EndReason, n_selections: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// Appends records as JSON lines; rejects timestamps that go backwards.
pub struct LogWriter<W: Write> {
    out: W,
    last_t: u64,
    written: usize,
}

impl LogWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, last_t: 0, written: 0 }
    }

    pub fn write(&mut self, t_ms: u64, event: Event) -> Result<(), LogError> {
        if t_ms < self.last_t {
            return Err(LogError::NonMonotone { line: self.written + 1, t_ms, prev: self.last_t });
        }
        let rec = Record { t_ms, event };
        serde_json::to_writer(&mut self.out, &rec).map_err(io::Error::from)?;
        self.out.write_all(b"\n")?;
        self.last_t = t_ms;
        self.written += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parse a JSONL log, checking timestamps are monotone. Blank lines are skipped.
pub fn read_log<R: BufRead>(r: R) -> Result<Vec<Record>, LogError> {
    let mut out = Vec::new();
    let mut prev = 0u64;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?;
        if rec.t_ms < prev {
            return Err(LogError::NonMonotone { line: i + 1, t_ms: rec.t_ms, prev });
        }
        if let Event::Header { format, .. } = &rec.event {
            if format != LOG_FORMAT {
                return Err(LogError::Format(format.clone()));
            }
        }
        prev = rec.t_ms;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_log_file(path: &Path) -> Result<Vec<Record>, LogError> {
    read_log(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_monotone() {
        let mut w = LogWriter::new(Vec::new());
        w.write(0, Event::SentenceStart { target: Some("HI".into()) }).unwrap();
        w.write(5, Event::Flash { trial: 0, seq: 0, code: 3, on: true }).unwrap();
        w.write(
            5,
            Event::Features { trial: 0, seq: 0, code: 3, values: vec![0.1 + 0.2, -1e-300, 12345.678901234567] },
        )
        .unwrap();
        assert!(matches!(w.write(4, Event::SentenceStart { target: None }), Err(LogError::NonMonotone { .. })));
        let bytes = w.into_inner();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains("\"event\":\"sentence_start\""));
        let recs = read_log(&bytes[..]).unwrap();
        assert_eq!(recs.len(), 3);
        let Event::Features { values, .. } = &recs[2].event else { panic!() };
        assert_eq!(values[0].to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(values[2].to_bits(), 12345.678901234567f64.to_bits());
    }

    #[test]
    fn rejects_backwards_time_on_read() {
        let text = "{\"t_ms\":10,\"event\":\"sentence_start\",\"target\":null}\n{\"t_ms\":3,\"event\":\"sentence_start\"}\n";
        assert!(matches!(read_log(text.as_bytes()), Err(LogError::NonMonotone { line: 2, .. })));
    }

    #[test]
    fn selection_defaults() {
        let line = "{\"t_ms\":0,\"event\":\"selection\",\"trial\":0,\"key\":\"Sp\",\"composed_after\":\"I \"}";
        let rec: Record = serde_json::from_str(line).unwrap();
        let Event::Selection { key, correct, shown, .. } = rec.event else { panic!() };
        assert_eq!(key, Key::SPACE);
        assert_eq!(correct, None);
        assert!(shown.is_empty());
    }
}
