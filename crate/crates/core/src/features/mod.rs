//! Sliding-window conversation features: coverage, speaking-time balance,
//! directed turn-taking and the dominant/non-dominant split.

mod dominance;
mod entropy;
mod turns;

pub use dominance::{dominance_partition, DominancePartition};
pub use entropy::{speech_entropy, turn_entropy, EntropyError};
pub use turns::{count_turns, TurnMatrix};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{non_silent, speaking_time, SpeechActivityMatrix};
use crate::participant::{ParticipantSet, GROUP_SIZE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("speech-activity matrix is empty")]
    EmptyMatrix,
    #[error("tick t={t} is beyond the latest row t={last}")]
    TickBeyondMatrix { t: u32, last: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Seconds per evaluation window.
    pub window_s: u32,
    /// Longest silence that still links two speech runs into a turn.
    pub turn_gap_s: u32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { window_s: 60, turn_gap_s: 10 }
    }
}

/// One evaluation: features of the window ending at `t_end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFeatures {
    pub t_end: u32,
    pub window_len: u32,
    pub speaking_time: [u32; GROUP_SIZE],
    pub scr: f64,
    pub h_speech: f64,
    pub turn_counts: TurnMatrix,
    pub h_turn: f64,
    pub dominance: DominancePartition,
}

/// Per-tick record written to the feature dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDump {
    pub t: u32,
    pub scr: f64,
    pub h_speech: f64,
    pub h_turn: f64,
    #[serde(rename = "T")]
    pub speaking_time: [u32; GROUP_SIZE],
    #[serde(rename = "C")]
    pub turn_counts: TurnMatrix,
    pub dominant: ParticipantSet,
}

impl WindowFeatures {
    pub fn dump(&self) -> FeatureDump {
        FeatureDump {
            t: self.t_end,
            scr: self.scr,
            h_speech: self.h_speech,
            h_turn: self.h_turn,
            speaking_time: self.speaking_time,
            turn_counts: self.turn_counts,
            dominant: self.dominance.dominant,
        }
    }

    /// Total seconds of speech in the window.
    pub fn total_speech(&self) -> u32 {
        self.speaking_time.iter().sum()
    }
}

/// First second of the window that ends at `t`.
pub fn window_start(t: u32, cfg: &WindowConfig) -> u32 {
    t.saturating_sub(cfg.window_s.saturating_sub(1))
}

/// Evaluates the window of the `cfg.window_s` most recent seconds ending at
/// `t` (fewer near the start of the session).
pub fn evaluate_window(
    matrix: &SpeechActivityMatrix,
    t: u32,
    cfg: &WindowConfig,
) -> Result<WindowFeatures, FeatureError> {
    let last = matrix.last_t().ok_or(FeatureError::EmptyMatrix)?;
    if t > last {
        return Err(FeatureError::TickBeyondMatrix { t, last });
    }
    let rows = matrix.slice(window_start(t, cfg)..=t);
    let window_len = rows.len() as u32;
    let speaking = speaking_time(rows);
    let turn_counts = count_turns(rows, cfg.turn_gap_s);
    let times = speaking.map(f64::from);
    Ok(WindowFeatures {
        t_end: t,
        window_len,
        speaking_time: speaking,
        scr: non_silent(rows) as f64 / window_len as f64,
        h_speech: speech_entropy(&times).expect("speaking times are non-negative"),
        turn_counts,
        h_turn: turn_entropy(&turn_counts).expect("counted turns have an empty diagonal"),
        dominance: dominance_partition(&speaking),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::participant::ParticipantId;

    fn p(i: u32) -> Option<ParticipantId> {
        Some(ParticipantId::new(i).unwrap())
    }

    #[test]
    fn coverage_over_a_full_window() {
        let mut rows = vec![None; 100];
        for r in rows.iter_mut().skip(40).take(45) {
            *r = p(1);
        }
        let m = SpeechActivityMatrix::from_speakers(rows);
        let f = evaluate_window(&m, 99, &WindowConfig::default()).unwrap();
        assert_eq!(f.window_len, 60);
        assert_eq!(f.scr, 0.75);
        assert_eq!(f.h_speech, 0.0);
        assert_eq!(f.speaking_time, [45, 0, 0, 0]);
    }

    #[test]
    fn early_windows_are_shorter() {
        let m = SpeechActivityMatrix::from_speakers(vec![p(1), p(2), None]);
        let f = evaluate_window(&m, 1, &WindowConfig::default()).unwrap();
        assert_eq!(f.window_len, 2);
        assert_eq!(f.scr, 1.0);
        assert_eq!(f.turn_counts.0[0][1], 1);
        assert_eq!(f.h_speech, 0.5);
    }

    #[test]
    fn errors() {
        let empty = SpeechActivityMatrix::new();
        assert_eq!(
            evaluate_window(&empty, 0, &WindowConfig::default()),
            Err(FeatureError::EmptyMatrix)
        );
        let m = SpeechActivityMatrix::from_speakers(vec![None; 3]);
        assert_eq!(
            evaluate_window(&m, 3, &WindowConfig::default()),
            Err(FeatureError::TickBeyondMatrix { t: 3, last: 2 })
        );
    }

    #[test]
    fn dump_uses_wire_keys() {
        let m = SpeechActivityMatrix::from_speakers(vec![p(1), p(1), p(2)]);
        let f = evaluate_window(&m, 2, &WindowConfig::default()).unwrap();
        let v = serde_json::to_value(f.dump()).unwrap();
        for key in ["t", "scr", "h_speech", "h_turn", "T", "C", "dominant"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["T"], serde_json::json!([2, 1, 0, 0]));
        // {2,1} vs {0,0} beats {2} vs {1,0,0}
        assert_eq!(v["dominant"], serde_json::json!(["P1", "P2"]));
    }
}
