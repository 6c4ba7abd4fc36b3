//! Engine for robot-facilitated four-person group discussions.
//!
//! A per-second diarization stream goes in; sliding-window features,
//! circumstance warnings, compiled stand choreographies and post-hoc stage
//! analytics come out.

pub mod analytics;
pub mod detector;
pub mod engine;
pub mod features;
pub mod gateway;
pub mod geometry;
pub mod ingest;
pub mod participant;
pub mod planner;
pub mod scenario;
pub mod server;

pub use participant::{ParticipantError, ParticipantId, ParticipantSet, Stage, GROUP_SIZE};
pub use detector::{CircumstanceWarning, WarningKind, WarningState};
pub use engine::{Engine, EngineConfig, EngineInput, EngineOutput, OperatorAction};
pub use features::{FeatureDump, WindowFeatures};
pub use ingest::{DiarizationFrame, EventKind, SessionEvent};
pub use planner::{ChoreographyProgram, FacilitationType, StandCommand, StandVerb};
