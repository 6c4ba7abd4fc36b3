//! Newline-delimited JSON frames exchanged with stands.
//!
//! Command: `{"args":{..},"crc32":"1a2b3c4d","seq":7,"stand":"P2","verb":"blink"}`
//! Ack: `{"pose":[x,y,deg],"seq":7,"status":"ok"}`
//!
//! Keys are emitted sorted with no whitespace. The checksum is the CRC-32
//! (IEEE) of the canonical JSON of the frame without its `crc32` key, as eight
//! lowercase hex digits.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::Pose;
use crate::participant::ParticipantId;
use crate::planner::StandVerb;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("checksum mismatch: frame says {claimed}, computed {computed}")]
    Checksum { claimed: String, computed: String },
    #[error("bad verb: {0}")]
    Verb(String),
}

/// Sorted keys, no whitespace.
pub fn canonical_json(v: &Value) -> String {
    // serde_json's default map is ordered by key.
    serde_json::to_string(v).expect("Value always serializes")
}

pub fn checksum(v: &Value) -> String {
    format!("{:08x}", crc32fast::hash(canonical_json(v).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandFrame {
    pub seq: u64,
    pub stand: ParticipantId,
    pub verb: String,
    pub args: Value,
    pub crc32: String,
}

impl CommandFrame {
    pub fn new(seq: u64, stand: ParticipantId, verb: &StandVerb) -> Self {
        let mut frame = CommandFrame {
            seq,
            stand,
            verb: verb.name().to_string(),
            args: verb.args(),
            crc32: String::new(),
        };
        frame.crc32 = frame.computed_crc();
        frame
    }

    fn body(&self) -> Value {
        serde_json::json!({
            "seq": self.seq,
            "stand": self.stand,
            "verb": self.verb,
            "args": self.args,
        })
    }

    pub fn computed_crc(&self) -> String {
        checksum(&self.body())
    }

    pub fn verify(&self) -> Result<(), WireError> {
        let computed = self.computed_crc();
        if computed == self.crc32 {
            Ok(())
        } else {
            Err(WireError::Checksum { claimed: self.crc32.clone(), computed })
        }
    }

    pub fn stand_verb(&self) -> Result<StandVerb, WireError> {
        StandVerb::from_wire(&self.verb, &self.args).map_err(WireError::Verb)
    }

    /// Canonical line, without the trailing newline.
    pub fn to_line(&self) -> String {
        let mut v = self.body();
        v["crc32"] = Value::String(self.crc32.clone());
        canonical_json(&v)
    }

    pub fn from_line(line: &str) -> Result<Self, WireError> {
        serde_json::from_str(line.trim()).map_err(|e| WireError::Malformed(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    Ok,
    Obstructed,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    pub status: AckStatus,
    pub pose: Pose,
}

impl Ack {
    pub fn to_line(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("ack serializes"))
    }

    pub fn from_line(line: &str) -> Result<Self, WireError> {
        serde_json::from_str(line.trim()).map_err(|e| WireError::Malformed(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_line_is_canonical() {
        let f = CommandFrame::new(7, ParticipantId::new(2).unwrap(), &StandVerb::MoveForward { mm: 50.0 });
        let line = f.to_line();
        let body = r#"{"args":{"mm":50.0},"seq":7,"stand":"P2","verb":"move_forward"}"#;
        let crc = format!("{:08x}", crc32fast::hash(body.as_bytes()));
        assert_eq!(
            line,
            format!(r#"{{"args":{{"mm":50.0}},"crc32":"{crc}","seq":7,"stand":"P2","verb":"move_forward"}}"#)
        );
        let back = CommandFrame::from_line(&line).unwrap();
        assert_eq!(back, f);
        back.verify().unwrap();
    }

    #[test]
    fn tampered_frame_fails_checksum() {
        let mut f = CommandFrame::new(1, ParticipantId::new(1).unwrap(), &StandVerb::RotateCw { deg: 90.0 });
        f.args["deg"] = serde_json::json!(91.0);
        assert!(matches!(f.verify(), Err(WireError::Checksum { .. })));
    }

    #[test]
    fn ack_line() {
        let a = Ack { seq: 3, status: AckStatus::Obstructed, pose: Pose::from_mm_deg(1.5, -2.0, 90.0) };
        assert_eq!(a.to_line(), r#"{"pose":[1.5,-2.0,90.0],"seq":3,"status":"obstructed"}"#);
        assert_eq!(Ack::from_line(&a.to_line()).unwrap(), a);
    }
}
