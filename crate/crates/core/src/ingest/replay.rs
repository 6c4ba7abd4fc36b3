//! Newline-delimited JSON replay and live-stream format.
//!
//! ```text
//! {"t":0,"speaker":"P2"}
//! {"t":1,"speaker":null}
//! {"t":300,"event":"stage_mark","stage":"storming"}
//! ```
//!
//! Lines carrying a `"type"` key are journal records written by the engine
//! (warnings, programs, operator actions); readers of the frame/event
//! stream skip them, so a session log doubles as a replay file.

use std::io::{BufRead, Write};

use serde_json::Value;
use thiserror::Error;

use super::{DiarizationFrame, SessionEvent};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayRecord {
    Frame(DiarizationFrame),
    Event(SessionEvent),
}

impl ReplayRecord {
    pub fn t(&self) -> u32 {
        match self {
            ReplayRecord::Frame(f) => f.t,
            ReplayRecord::Event(e) => e.t,
        }
    }

    pub fn to_json_line(&self) -> String {
        match self {
            ReplayRecord::Frame(f) => serde_json::to_string(f),
            ReplayRecord::Event(e) => serde_json::to_string(e),
        }
        .expect("replay records always serialize")
    }
}

/// Parses one line. Blank lines and journal records yield `Ok(None)`.
pub fn parse_line(line: &str) -> Result<Option<ReplayRecord>, String> {
    let line = line.trim();
    if line.is_empty() {
        return Ok(None);
    }
    let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = value.as_object().ok_or("expected a JSON object")?;
    if obj.contains_key("type") {
        return Ok(None);
    }
    if obj.contains_key("event") {
        let event: SessionEvent = serde_json::from_value(value).map_err(|e| e.to_string())?;
        return Ok(Some(ReplayRecord::Event(event)));
    }
    if obj.contains_key("speaker") {
        let frame: DiarizationFrame = serde_json::from_value(value).map_err(|e| e.to_string())?;
        return Ok(Some(ReplayRecord::Frame(frame)));
    }
    Err("object is neither a frame nor an event".into())
}

pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<ReplayRecord>, ReplayError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        match parse_line(&line) {
            Ok(Some(r)) => out.push(r),
            Ok(None) => {}
            Err(message) => return Err(ReplayError::Parse { line: i + 1, message }),
        }
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut w: W, records: &[ReplayRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_json_line())?;
    }
    Ok(())
}
