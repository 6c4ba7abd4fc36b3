use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::StandCommand;
use crate::participant::{ParticipantId, ParticipantSet};
use crate::planner::StandVerb;

/// The nine facilitation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacilitationType {
    Icebreaking,
    SpeechControl,
    LeaderElection,
    ConflictSolving,
    ConnectionTickle,
    SilenceBreaking,
    ParticipationBalanceBasic,
    ParticipationBalanceStrengthened,
    Farewell,
}

/// How many targets a facilitation takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetArity {
    /// Every participant; for icebreaking the order is the introduction order.
    All,
    Exactly(usize),
    Between(usize, usize),
}

impl TargetArity {
    pub fn accepts(self, n: usize) -> bool {
        match self {
            TargetArity::All => n == crate::GROUP_SIZE,
            TargetArity::Exactly(k) => n == k,
            TargetArity::Between(lo, hi) => (lo..=hi).contains(&n),
        }
    }
}

impl fmt::Display for TargetArity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetArity::All => write!(f, "all {}", crate::GROUP_SIZE),
            TargetArity::Exactly(k) => write!(f, "exactly {k}"),
            TargetArity::Between(lo, hi) => write!(f, "{lo} to {hi}"),
        }
    }
}

impl FacilitationType {
    pub const ALL: [FacilitationType; 9] = [
        FacilitationType::Icebreaking,
        FacilitationType::SpeechControl,
        FacilitationType::LeaderElection,
        FacilitationType::ConflictSolving,
        FacilitationType::ConnectionTickle,
        FacilitationType::SilenceBreaking,
        FacilitationType::ParticipationBalanceBasic,
        FacilitationType::ParticipationBalanceStrengthened,
        FacilitationType::Farewell,
    ];

    /// Ordered-pair types read targets as (sender, receiver) for tickles and
    /// (active, inactive) for strengthened balance.
    pub fn arity(self) -> TargetArity {
        match self {
            FacilitationType::Icebreaking
            | FacilitationType::SilenceBreaking
            | FacilitationType::Farewell => TargetArity::All,
            FacilitationType::ConflictSolving
            | FacilitationType::ConnectionTickle
            | FacilitationType::ParticipationBalanceStrengthened => TargetArity::Exactly(2),
            FacilitationType::SpeechControl | FacilitationType::LeaderElection => TargetArity::Exactly(1),
            FacilitationType::ParticipationBalanceBasic => TargetArity::Between(1, 3),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FacilitationType::Icebreaking => "icebreaking",
            FacilitationType::SpeechControl => "speech_control",
            FacilitationType::LeaderElection => "leader_election",
            FacilitationType::ConflictSolving => "conflict_solving",
            FacilitationType::ConnectionTickle => "connection_tickle",
            FacilitationType::SilenceBreaking => "silence_breaking",
            FacilitationType::ParticipationBalanceBasic => "participation_balance_basic",
            FacilitationType::ParticipationBalanceStrengthened => "participation_balance_strengthened",
            FacilitationType::Farewell => "farewell",
        }
    }
}

impl fmt::Display for FacilitationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FacilitationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FacilitationType::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown facilitation {s:?}"))
    }
}

/// A compiled, timed movement program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoreographyProgram {
    pub program_id: String,
    pub facilitation: FacilitationType,
    pub targets: Vec<ParticipantId>,
    pub commands: Vec<StandCommand>,
    /// Command indices that must be released on the same tick.
    pub sync_groups: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramViolation {
    #[error("stand {stand} commands {a} and {b} overlap in time")]
    Overlap { stand: ParticipantId, a: usize, b: usize },
    #[error("stand {0} does not end with return_home")]
    MissingReturnHome(ParticipantId),
    #[error("sync group {0} has commands with different start offsets")]
    UnsyncedGroup(usize),
    #[error("sync group {group} references command {index}, which does not exist")]
    BadSyncIndex { group: usize, index: usize },
    #[error("program lasts {0} ms, longer than {1} ms")]
    TooLong(u64, u64),
    #[error("command {0}: {1}")]
    InvalidVerb(usize, String),
}

impl ChoreographyProgram {
    pub fn duration_ms(&self) -> u64 {
        self.commands.iter().map(StandCommand::end_ms).max().unwrap_or(0)
    }

    /// Stands the program touches.
    pub fn stands(&self) -> ParticipantSet {
        self.commands.iter().map(|c| c.stand).collect()
    }

    /// Commands for one stand in time order, with their indices.
    pub fn commands_for(&self, stand: ParticipantId) -> Vec<(usize, &StandCommand)> {
        let mut cmds: Vec<_> = self
            .commands
            .iter()
            .enumerate()
            .filter(|(_, c)| c.stand == stand)
            .collect();
        cmds.sort_by_key(|(i, c)| (c.start_offset_ms, *i));
        cmds
    }

    /// Checks the structural invariants every compiled program satisfies.
    pub fn check(&self, max_duration_ms: u64) -> Result<(), ProgramViolation> {
        for (i, c) in self.commands.iter().enumerate() {
            c.verb.validate().map_err(|e| ProgramViolation::InvalidVerb(i, e))?;
        }
        for stand in self.stands().iter() {
            let cmds = self.commands_for(stand);
            for pair in cmds.windows(2) {
                let ((ia, a), (ib, b)) = (pair[0], pair[1]);
                // Closed intervals: touching end/start counts as overlap.
                if b.start_offset_ms <= a.end_ms() {
                    return Err(ProgramViolation::Overlap { stand, a: ia, b: ib });
                }
            }
            match cmds.last() {
                Some((_, c)) if c.verb == StandVerb::ReturnHome => {}
                _ => return Err(ProgramViolation::MissingReturnHome(stand)),
            }
        }
        for (g, group) in self.sync_groups.iter().enumerate() {
            let mut offsets = group.iter().map(|&i| {
                self.commands
                    .get(i)
                    .map(|c| c.start_offset_ms)
                    .ok_or(ProgramViolation::BadSyncIndex { group: g, index: i })
            });
            if let Some(first) = offsets.next() {
                let first = first?;
                for o in offsets {
                    if o? != first {
                        return Err(ProgramViolation::UnsyncedGroup(g));
                    }
                }
            }
        }
        let d = self.duration_ms();
        if d > max_duration_ms {
            return Err(ProgramViolation::TooLong(d, max_duration_ms));
        }
        Ok(())
    }
}
