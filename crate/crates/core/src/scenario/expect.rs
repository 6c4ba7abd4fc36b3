use serde::{Deserialize, Serialize};

use crate::detector::{CircumstanceWarning, WarningKind};
use crate::participant::ParticipantId;

use super::ScenarioError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedWarning {
    pub t: u32,
    #[serde(default)]
    pub tol_s: u32,
    pub kind: WarningKind,
    /// Checked only when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<ParticipantId>>,
}

/// What a scenario replay must produce. Every emitted warning has to match
/// exactly one expected entry and vice versa.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Expectation {
    #[serde(default)]
    pub warnings: Vec<ExpectedWarning>,
    /// Number of programs the gateway must have run, when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispatches: Option<usize>,
}

impl Expectation {
    pub fn from_json(s: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(s).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Returns every mismatch, empty when the replay conforms.
    pub fn check(&self, emitted: &[CircumstanceWarning], dispatches: usize) -> Vec<String> {
        let mut problems = Vec::new();
        let mut used = vec![false; emitted.len()];
        for exp in &self.warnings {
            let found = emitted.iter().enumerate().find(|(i, w)| {
                !used[*i]
                    && w.kind == exp.kind
                    && w.t.abs_diff(exp.t) <= exp.tol_s
                    && exp.targets.as_ref().map_or(true, |ts| w.targets == ts.iter().copied().collect())
            });
            match found {
                Some((i, _)) => used[i] = true,
                None => problems.push(format!(
                    "missing {} at t={}±{}{}",
                    exp.kind,
                    exp.t,
                    exp.tol_s,
                    exp.targets.as_ref().map(|ts| format!(" targets {ts:?}")).unwrap_or_default()
                )),
            }
        }
        for (w, _) in emitted.iter().zip(&used).filter(|(_, u)| !**u) {
            problems.push(format!("unexpected {} at t={} targets {}", w.kind, w.t, w.targets));
        }
        if let Some(n) = self.dispatches {
            if n != dispatches {
                problems.push(format!("expected {n} dispatches, got {dispatches}"));
            }
        }
        problems
    }
}
