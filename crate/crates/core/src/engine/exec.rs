//! Carries engine outputs out against a gateway.

use serde::{Deserialize, Serialize};

use super::EngineOutput;
use crate::gateway::{Ack, ExecutionReport, Gateway, TickleOutcome};
use crate::participant::ParticipantId;

/// Result of executing one engine output. Serialized with a `"type"` key so
/// it can sit in the session journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Execution {
    Report { t: u32, report: ExecutionReport },
    DirectAck { t: u32, stand: ParticipantId, ack: Ack },
    TickleResult { t: u32, from: ParticipantId, to: ParticipantId, outcome: TickleOutcome },
    Failed { t: u32, what: String, reason: String },
}

impl Execution {
    /// Copy with wall-clock fields zeroed, for reproducible logs.
    pub fn without_timing(&self) -> Execution {
        match self {
            Execution::Report { t, report } => Execution::Report { t: *t, report: report.without_timing() },
            Execution::TickleResult { t, from, to, outcome: TickleOutcome::Delivered { report } } => {
                Execution::TickleResult {
                    t: *t,
                    from: *from,
                    to: *to,
                    outcome: TickleOutcome::Delivered { report: report.without_timing() },
                }
            }
            other => other.clone(),
        }
    }
}

/// Runs a dispatch, direct command or tickle. Other outputs need no stand
/// traffic and yield `None`.
pub fn execute(gateway: &Gateway, output: &EngineOutput) -> Option<Execution> {
    match output {
        EngineOutput::Dispatch { t, program, .. } => Some(match gateway.dispatch(program) {
            Ok(report) => Execution::Report { t: *t, report },
            Err(e) => Execution::Failed { t: *t, what: program.program_id.clone(), reason: e.to_string() },
        }),
        EngineOutput::Direct { t, stand, verb, force, .. } => Some(match gateway.direct_command(*stand, verb, *force) {
            Ok(ack) => Execution::DirectAck { t: *t, stand: *stand, ack },
            Err(e) => Execution::Failed { t: *t, what: format!("{} {stand}", verb.name()), reason: e.to_string() },
        }),
        EngineOutput::Tickle { t, from, to } => Some(match gateway.tickle(*from, *to) {
            Ok(outcome) => Execution::TickleResult { t: *t, from: *from, to: *to, outcome },
            Err(e) => Execution::Failed { t: *t, what: format!("tickle {from}->{to}"), reason: e.to_string() },
        }),
        _ => None,
    }
}
