use std::fmt;

use serde::{Deserialize, Serialize};

use crate::features::FeatureDump;
use crate::participant::{ParticipantId, ParticipantSet, Stage};
use crate::planner::FacilitationType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    /// Kept for operator-raised warnings; never detected automatically.
    NoIcebreak,
    IntroTooShort,
    NoLeader,
    DyadConflict,
    AllSilent,
    DominanceImbalance,
    LowInterdependencePair,
}

impl WarningKind {
    pub const ALL: [WarningKind; 7] = [
        WarningKind::NoIcebreak,
        WarningKind::IntroTooShort,
        WarningKind::NoLeader,
        WarningKind::DyadConflict,
        WarningKind::AllSilent,
        WarningKind::DominanceImbalance,
        WarningKind::LowInterdependencePair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WarningKind::NoIcebreak => "no_icebreak",
            WarningKind::IntroTooShort => "intro_too_short",
            WarningKind::NoLeader => "no_leader",
            WarningKind::DyadConflict => "dyad_conflict",
            WarningKind::AllSilent => "all_silent",
            WarningKind::DominanceImbalance => "dominance_imbalance",
            WarningKind::LowInterdependencePair => "low_interdependence_pair",
        }
    }

    /// Stages in which the kind may be raised.
    pub fn stages(self) -> &'static [Stage] {
        match self {
            WarningKind::NoIcebreak | WarningKind::IntroTooShort => &[Stage::Forming],
            WarningKind::NoLeader | WarningKind::DyadConflict | WarningKind::LowInterdependencePair => {
                &[Stage::Storming]
            }
            WarningKind::AllSilent => &[Stage::Storming, Stage::NormingPerforming],
            WarningKind::DominanceImbalance => &[Stage::NormingPerforming],
        }
    }

    /// Silence-driven kinds lapse as soon as someone speaks again.
    pub fn ends_with_speech(self) -> bool {
        matches!(self, WarningKind::AllSilent | WarningKind::NoLeader)
    }
}

impl fmt::Display for WarningKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for WarningKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WarningKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown warning kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningState {
    Open,
    Confirmed,
    Dismissed,
    Expired,
}

impl WarningState {
    pub fn is_terminal(self) -> bool {
        self != WarningState::Open
    }
}

/// What the rule saw when it fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// Human-readable trace of the rule and the values it compared.
    pub rule: String,
    pub silence_run_s: u32,
    pub window: FeatureDump,
    /// Dynamics alone cannot tell a quarrel from a lively exchange.
    pub operator_judgment_required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircumstanceWarning {
    pub id: String,
    pub t: u32,
    pub stage: Stage,
    pub kind: WarningKind,
    /// Participants the circumstance concerns.
    pub targets: ParticipantSet,
    pub recommended: FacilitationType,
    /// Ordered program targets for `recommended`.
    pub recommended_targets: Vec<ParticipantId>,
    pub evidence: Evidence,
    pub state: WarningState,
    /// Session second of the last state change.
    pub updated_t: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escalation_of: Option<String>,
}
