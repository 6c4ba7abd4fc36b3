//! Session ingestion: the authoritative session clock, the speech-activity
//! matrix and the timeline of lifecycle events.
//!
//! Frames must arrive gap-free, one per second. Upstream adapters emit
//! explicit silence frames instead of skipping seconds.

mod matrix;
pub mod replay;

pub use matrix::{non_silent, speaking_time, DiarizationFrame, SpeechActivityMatrix};
pub use replay::ReplayRecord;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::participant::{ParticipantId, Stage, GROUP_SIZE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("expected {GROUP_SIZE} participants, got {0}")]
    WrongGroupSize(usize),
    #[error("duplicate participant label {0:?}")]
    DuplicateLabel(String),
    #[error("frame t={t} is not after the last frame t={last}")]
    OutOfOrderFrame { t: u32, last: u32 },
    #[error("frame t={t} leaves a gap after t={expected_prev:?}; emit silence frames instead")]
    GapDetected { t: u32, expected_prev: Option<u32> },
    #[error("event at t={t} is ahead of the session clock (next frame is t={next})")]
    EventFromFuture { t: u32, next: u32 },
    #[error("event at t={t} precedes the last logged event at t={last}")]
    OutOfOrderEvent { t: u32, last: u32 },
    #[error("stage mark {requested} after {current}")]
    StageOrderViolation { current: Stage, requested: Stage },
    #[error("countdown alert already received at t={0}")]
    DuplicateCountdownAlert(u32),
    #[error("session already ended")]
    SessionEnded,
}

/// Kinds of session lifecycle events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    SessionStart,
    StageMark { stage: Stage },
    CountdownAlert,
    SessionEnd,
    /// Operator-entered task completion; closes the countdown substage.
    TaskComplete,
    OperatorNote { text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub t: u32,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl SessionEvent {
    pub fn new(t: u32, kind: EventKind) -> Self {
        SessionEvent { t, kind }
    }

    pub fn stage(t: u32, stage: Stage) -> Self {
        SessionEvent { t, kind: EventKind::StageMark { stage } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    NotStarted,
    Running,
    Ended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppendAck {
    pub t: u32,
    pub rows: usize,
}

/// A registered four-person session.
#[derive(Debug, Clone)]
pub struct Session {
    labels: Vec<String>,
    matrix: SpeechActivityMatrix,
    state: SessionState,
    stage: Option<(Stage, u32)>,
    stage_marks: Vec<(Stage, u32)>,
    countdown: Option<u32>,
    events: Vec<SessionEvent>,
}

/// Registers a session; labels map to `P1..P4` in the given order.
pub fn register_session<S: AsRef<str>>(labels: &[S]) -> Result<Session, IngestError> {
    if labels.len() != GROUP_SIZE {
        return Err(IngestError::WrongGroupSize(labels.len()));
    }
    let mut seen: Vec<&str> = Vec::with_capacity(GROUP_SIZE);
    for l in labels {
        let l = l.as_ref();
        if seen.contains(&l) {
            return Err(IngestError::DuplicateLabel(l.to_string()));
        }
        seen.push(l);
    }
    Ok(Session {
        labels: labels.iter().map(|l| l.as_ref().to_string()).collect(),
        matrix: SpeechActivityMatrix::new(),
        state: SessionState::NotStarted,
        stage: None,
        stage_marks: Vec::new(),
        countdown: None,
        events: Vec::new(),
    })
}

impl Session {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_of(&self, p: ParticipantId) -> &str {
        &self.labels[p.slot()]
    }

    pub fn matrix(&self) -> &SpeechActivityMatrix {
        &self.matrix
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    /// Latest accepted second; `None` plays the role of t = -1.
    pub fn clock(&self) -> Option<u32> {
        self.matrix.last_t()
    }

    fn next_t(&self) -> u32 {
        self.clock().map_or(0, |t| t + 1)
    }

    /// Current stage and the time it was marked.
    pub fn stage(&self) -> Option<(Stage, u32)> {
        self.stage
    }

    pub fn stage_marks(&self) -> &[(Stage, u32)] {
        &self.stage_marks
    }

    pub fn countdown(&self) -> Option<u32> {
        self.countdown
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn push_frame(&mut self, frame: DiarizationFrame) -> Result<AppendAck, IngestError> {
        if self.state == SessionState::Ended {
            return Err(IngestError::SessionEnded);
        }
        let expected = self.next_t();
        if frame.t < expected {
            return Err(IngestError::OutOfOrderFrame {
                t: frame.t,
                last: expected - 1,
            });
        }
        if frame.t > expected {
            return Err(IngestError::GapDetected {
                t: frame.t,
                expected_prev: self.clock(),
            });
        }
        self.state = SessionState::Running;
        self.matrix.push(frame.speaker);
        Ok(AppendAck { t: frame.t, rows: self.matrix.len() })
    }

    pub fn push_event(&mut self, event: SessionEvent) -> Result<AppendAck, IngestError> {
        if self.state == SessionState::Ended {
            return Err(IngestError::SessionEnded);
        }
        let next = self.next_t();
        if event.t > next {
            return Err(IngestError::EventFromFuture { t: event.t, next });
        }
        if let Some(last) = self.events.last() {
            if event.t < last.t {
                return Err(IngestError::OutOfOrderEvent { t: event.t, last: last.t });
            }
        }
        match &event.kind {
            EventKind::StageMark { stage } => {
                if let Some((current, _)) = self.stage {
                    if *stage < current {
                        return Err(IngestError::StageOrderViolation {
                            current,
                            requested: *stage,
                        });
                    }
                }
                if self.stage.map(|(s, _)| s) != Some(*stage) {
                    self.stage = Some((*stage, event.t));
                    self.stage_marks.push((*stage, event.t));
                }
            }
            EventKind::CountdownAlert => {
                if let Some(prev) = self.countdown {
                    return Err(IngestError::DuplicateCountdownAlert(prev));
                }
                self.countdown = Some(event.t);
            }
            EventKind::SessionStart => {
                if self.state == SessionState::NotStarted {
                    self.state = SessionState::Running;
                }
            }
            EventKind::SessionEnd => self.state = SessionState::Ended,
            EventKind::TaskComplete | EventKind::OperatorNote { .. } => {}
        }
        let t = event.t;
        self.events.push(event);
        Ok(AppendAck { t, rows: self.matrix.len() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(i: u32) -> ParticipantId {
        ParticipantId::new(i).unwrap()
    }

    #[test]
    fn register_checks_group() {
        let s = register_session(&["A", "B", "C", "D"]).unwrap();
        assert_eq!(s.matrix().len(), 0);
        assert_eq!(s.clock(), None);
        assert_eq!(s.state(), SessionState::NotStarted);
        assert_eq!(
            register_session(&["A", "A", "C", "D"]).unwrap_err(),
            IngestError::DuplicateLabel("A".into())
        );
        assert_eq!(
            register_session(&["A", "B", "C"]).unwrap_err(),
            IngestError::WrongGroupSize(3)
        );
    }

    #[test]
    fn frames_encode_one_hot() {
        let mut s = register_session(&["A", "B", "C", "D"]).unwrap();
        s.push_event(SessionEvent::new(0, EventKind::SessionStart)).unwrap();
        s.push_frame(DiarizationFrame::speech(0, p(2))).unwrap();
        assert_eq!(s.matrix().row(0), [0, 1, 0, 0]);
        s.push_frame(DiarizationFrame::silence(1)).unwrap();
        assert_eq!(s.matrix().row(1), [0, 0, 0, 0]);
        assert_eq!(s.state(), SessionState::Running);
    }

    #[test]
    fn gaps_and_reordering_rejected() {
        let mut s = register_session(&["A", "B", "C", "D"]).unwrap();
        for t in 0..=3 {
            s.push_frame(DiarizationFrame::silence(t)).unwrap();
        }
        assert!(matches!(
            s.push_frame(DiarizationFrame::silence(5)),
            Err(IngestError::GapDetected { t: 5, .. })
        ));
        assert!(matches!(
            s.push_frame(DiarizationFrame::silence(3)),
            Err(IngestError::OutOfOrderFrame { t: 3, last: 3 })
        ));
        assert_eq!(s.matrix().len(), 4);
    }

    #[test]
    fn stage_marks_must_be_ordered() {
        let mut s = register_session(&["A", "B", "C", "D"]).unwrap();
        s.push_event(SessionEvent::stage(0, Stage::Forming)).unwrap();
        for t in 0..300 {
            s.push_frame(DiarizationFrame::silence(t)).unwrap();
        }
        s.push_event(SessionEvent::stage(300, Stage::Storming)).unwrap();
        assert_eq!(s.stage(), Some((Stage::Storming, 300)));
        assert!(matches!(
            s.push_event(SessionEvent::stage(300, Stage::Forming)),
            Err(IngestError::StageOrderViolation { .. })
        ));
    }

    #[test]
    fn single_countdown_alert() {
        let mut s = register_session(&["A", "B", "C", "D"]).unwrap();
        s.push_event(SessionEvent::new(0, EventKind::CountdownAlert)).unwrap();
        assert_eq!(
            s.push_event(SessionEvent::new(0, EventKind::CountdownAlert)),
            Err(IngestError::DuplicateCountdownAlert(0))
        );
    }

    #[test]
    fn events_cannot_run_ahead_of_clock() {
        let mut s = register_session(&["A", "B", "C", "D"]).unwrap();
        assert!(s.push_event(SessionEvent::stage(0, Stage::Forming)).is_ok());
        assert!(matches!(
            s.push_event(SessionEvent::stage(2, Stage::Storming)),
            Err(IngestError::EventFromFuture { t: 2, next: 0 })
        ));
    }

    #[test]
    fn ended_session_rejects_input() {
        let mut s = register_session(&["A", "B", "C", "D"]).unwrap();
        s.push_frame(DiarizationFrame::silence(0)).unwrap();
        s.push_event(SessionEvent::new(1, EventKind::SessionEnd)).unwrap();
        assert_eq!(
            s.push_frame(DiarizationFrame::silence(1)),
            Err(IngestError::SessionEnded)
        );
    }
}
