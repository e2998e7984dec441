//! On-disk formats: word-level transcripts (JSON lines), motion traces
//! (JSON), BVH export and evaluation reports.

mod bvh;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::agent::Transcript;
use crate::motion::CharacterId;
use crate::signals::TranscriptWord;
use crate::trace::{MotionTrace, TRACE_FORMAT, TRACE_VERSION};

pub use bvh::{export_bvh, render_bvh};
pub use report::{
    eval_report, CrossMetrics, EvalReport, TraceMetrics, REPORT_FORMAT, REPORT_VERSION,
};

pub const TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("validation error at {location}: {message}")]
    Validation { location: String, message: String },
    #[error("unsupported {kind} version {found}; expected {expected}")]
    UnsupportedVersion {
        kind: &'static str,
        found: u64,
        expected: u32,
    },
    #[error("skeleton hierarchy unusable for export: {0}")]
    MissingHierarchy(String),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes `bytes` to a sibling temporary file, flushes it and renames it
/// over `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let name = path
        .file_name()
        .ok_or_else(|| IoError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "not a file path"),
        })?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TranscriptHeader {
    version: u64,
    #[serde(default)]
    hints: BTreeMap<String, String>,
}

fn json_location(line: usize, e: &serde_json::Error) -> String {
    if e.column() > 0 {
        format!("line {line}, column {}", e.column())
    } else {
        format!("line {line}")
    }
}

/// Parses a transcript: one JSON object per line, optionally preceded by a
/// `{"version": 1, "hints": {...}}` header line. Blank lines are ignored.
pub fn parse_transcript(text: &str) -> Result<Transcript, IoError> {
    let mut transcript = Transcript::default();
    let mut lines: Vec<usize> = Vec::new();
    let mut seen_record = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parse = |e: serde_json::Error| IoError::Parse {
            location: json_location(line, &e),
            message: e.to_string(),
        };
        let value: Value = serde_json::from_str(raw).map_err(parse)?;
        let is_header = value.as_object().is_some_and(|o| o.contains_key("version"));
        if is_header {
            if seen_record {
                return Err(IoError::Parse {
                    location: format!("line {line}"),
                    message: "header must be the first record".into(),
                });
            }
            let header: TranscriptHeader = serde_json::from_value(value).map_err(parse)?;
            if header.version != u64::from(TRANSCRIPT_VERSION) {
                return Err(IoError::UnsupportedVersion {
                    kind: "transcript",
                    found: header.version,
                    expected: TRANSCRIPT_VERSION,
                });
            }
            transcript.hints = header.hints;
        } else {
            let word: TranscriptWord = serde_json::from_value(value).map_err(parse)?;
            transcript.words.push(word);
            lines.push(line);
        }
        seen_record = true;
    }
    validate_words(&transcript.words, &lines)?;
    Ok(transcript)
}

fn validate_words(words: &[TranscriptWord], lines: &[usize]) -> Result<(), IoError> {
    if words.is_empty() {
        return Err(IoError::Validation {
            location: "file".into(),
            message: "transcript contains no words".into(),
        });
    }
    let mut last: BTreeMap<CharacterId, (f64, usize)> = BTreeMap::new();
    for (w, &line) in words.iter().zip(lines) {
        let fail = |message: String| IoError::Validation {
            location: format!("line {line}"),
            message,
        };
        if w.word.trim().is_empty() {
            return Err(fail("word is empty".into()));
        }
        if !(w.start.is_finite() && w.end.is_finite()) || w.start < 0.0 {
            return Err(fail(format!("timestamps [{}, {}] must be finite and non-negative", w.start, w.end)));
        }
        if w.end < w.start {
            return Err(fail(format!("end {} precedes start {}", w.end, w.start)));
        }
        if let Some(&(prev_end, prev_line)) = last.get(&w.speaker) {
            if w.start < prev_end {
                return Err(fail(format!(
                    "`{}` starts at {} before the previous word of {} (line {prev_line}) ends at {prev_end}",
                    w.word, w.start, w.speaker
                )));
            }
        }
        last.insert(w.speaker, (w.end, line));
    }
    Ok(())
}

pub fn load_transcript(path: &Path) -> Result<Transcript, IoError> {
    parse_transcript(&read_text(path)?)
}

/// Compact JSON with a trailing newline. Floats are written with
/// round-trip precision.
pub fn trace_to_bytes(trace: &MotionTrace) -> Result<Vec<u8>, IoError> {
    trace.validate().map_err(|e| IoError::Validation {
        location: "trace".into(),
        message: e.0,
    })?;
    let mut bytes = serde_json::to_vec(trace).expect("trace serializes to JSON");
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn trace_from_bytes(bytes: &[u8]) -> Result<MotionTrace, IoError> {
    let parse = |e: serde_json::Error| IoError::Parse {
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    };
    let value: Value = serde_json::from_slice(bytes).map_err(parse)?;
    let header = value.get("header");
    let format = header.and_then(|h| h.get("format")).and_then(Value::as_str);
    if format != Some(TRACE_FORMAT) {
        return Err(IoError::Parse {
            location: "header.format".into(),
            message: format!("expected `{TRACE_FORMAT}`"),
        });
    }
    match header.and_then(|h| h.get("version")).and_then(Value::as_u64) {
        Some(v) if v == u64::from(TRACE_VERSION) => {}
        Some(found) => {
            return Err(IoError::UnsupportedVersion {
                kind: "trace",
                found,
                expected: TRACE_VERSION,
            })
        }
        None => {
            return Err(IoError::Parse {
                location: "header.version".into(),
                message: "missing or not an unsigned integer".into(),
            })
        }
    }
    let trace: MotionTrace = serde_json::from_slice(bytes).map_err(parse)?;
    trace.validate().map_err(|e| IoError::Validation {
        location: "trace".into(),
        message: e.0,
    })?;
    Ok(trace)
}

pub fn save_trace(path: &Path, trace: &MotionTrace) -> Result<(), IoError> {
    write_atomic(path, &trace_to_bytes(trace)?)
}

pub fn load_trace(path: &Path) -> Result<MotionTrace, IoError> {
    trace_from_bytes(&fs::read(path).map_err(io_err(path))?)
}
