//! Rule-based detection of stage-specific circumstances.
//!
//! The detector only raises warnings. Nothing here can move a stand; a
//! warning turns into a program only after an operator confirms it.

mod warning;

pub use warning::{CircumstanceWarning, Evidence, WarningKind, WarningState};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{count_turns, TurnMatrix, WindowFeatures};
use crate::ingest::{speaking_time, SpeechActivityMatrix};
use crate::participant::{ParticipantId, ParticipantSet, Stage, GROUP_SIZE};
use crate::planner::FacilitationType;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectorError {
    #[error("tick t={t} does not follow t={last}")]
    OutOfOrderTick { t: u32, last: u32 },
    #[error("unknown warning {0}")]
    UnknownWarning(String),
    #[error("warning {id} is already {state:?}")]
    AlreadyTerminal { id: String, state: WarningState },
    #[error("warning {0} was not confirmed for basic participation balance")]
    NotEscalatable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub silence_threshold_s: u32,
    pub intro_min_s: u32,
    pub imbalance_dwell_s: u32,
    /// Non-dominant members' combined share of speech below which the split
    /// counts as imbalanced.
    pub imbalance_max_share: f64,
    pub conflict_dyad_share: f64,
    pub conflict_min_switches: u32,
    pub cooldown_s: u32,
    pub no_reaction_window_s: u32,
    /// Open warnings nobody acts on expire after this long.
    pub warning_ttl_s: u32,
    /// Look-back for pairs that never exchange turns.
    pub interdependence_horizon_s: u32,
    /// Both members of a silent pair must have spoken this much in the horizon.
    pub interdependence_min_speech_s: u32,
    pub turn_gap_s: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            silence_threshold_s: 120,
            intro_min_s: 15,
            imbalance_dwell_s: 60,
            imbalance_max_share: 0.2,
            conflict_dyad_share: 0.8,
            conflict_min_switches: 6,
            cooldown_s: 120,
            no_reaction_window_s: 60,
            warning_ttl_s: 120,
            interdependence_horizon_s: 300,
            interdependence_min_speech_s: 15,
            turn_gap_s: 10,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("silence_threshold_s", self.silence_threshold_s),
            ("intro_min_s", self.intro_min_s),
            ("imbalance_dwell_s", self.imbalance_dwell_s),
            ("conflict_min_switches", self.conflict_min_switches),
            ("cooldown_s", self.cooldown_s),
            ("no_reaction_window_s", self.no_reaction_window_s),
            ("warning_ttl_s", self.warning_ttl_s),
            ("interdependence_horizon_s", self.interdependence_horizon_s),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        for (name, v) in [
            ("imbalance_max_share", self.imbalance_max_share),
            ("conflict_dyad_share", self.conflict_dyad_share),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(format!("{name} must be in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Everything the detector looks at for one tick.
#[derive(Debug, Clone, Copy)]
pub struct TickInput<'a> {
    pub features: &'a WindowFeatures,
    pub matrix: &'a SpeechActivityMatrix,
    /// Current stage and the second it was marked, if any.
    pub stage: Option<(Stage, u32)>,
    /// Consecutive silent seconds up to and including this tick.
    pub silence_run_s: u32,
    /// Stands currently executing a program.
    pub busy: ParticipantSet,
}

/// How a participant reacted after a basic participation-balance program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacilitationOutcome {
    Reacted,
    NoReaction,
}

/// Pure dyad check on one window's turn matrix.
///
/// Returns the unordered pair carrying at least `conflict_dyad_share` of all
/// turns, if the window holds at least `conflict_min_switches` turns.
pub fn detect_conflict(turns: &TurnMatrix, cfg: &DetectorConfig) -> Option<((ParticipantId, ParticipantId), f64)> {
    let total = turns.total();
    if total < cfg.conflict_min_switches || total == 0 {
        return None;
    }
    let mut best: Option<((ParticipantId, ParticipantId), u32)> = None;
    for (i, &a) in ParticipantId::ALL.iter().enumerate() {
        for &b in &ParticipantId::ALL[i + 1..] {
            let n = turns.pair_total(a, b);
            if best.map_or(true, |(_, m)| n > m) {
                best = Some(((a, b), n));
            }
        }
    }
    let (pair, n) = best?;
    let share = n as f64 / total as f64;
    (share >= cfg.conflict_dyad_share).then_some((pair, share))
}

/// Lowest id among the maxima of `values` restricted to `among`.
fn argmax(values: &[u32; GROUP_SIZE], among: ParticipantSet) -> Option<ParticipantId> {
    among.iter().fold(None, |best, p| match best {
        Some(b) if values[b.slot()] >= values[p.slot()] => Some(b),
        _ => Some(p),
    })
}

fn argmin(values: &[u32; GROUP_SIZE], among: ParticipantSet) -> Option<ParticipantId> {
    among.iter().fold(None, |best, p| match best {
        Some(b) if values[b.slot()] <= values[p.slot()] => Some(b),
        _ => Some(p),
    })
}

/// A participant's first turn in Forming, bridged over short pauses.
#[derive(Debug, Clone, Copy)]
struct IntroRun {
    speaker: ParticipantId,
    speech_s: u32,
    last_speech_t: u32,
}

#[derive(Debug, Clone, Copy)]
struct ReactionWatch {
    since_t: u32,
}

struct Candidate {
    kind: WarningKind,
    targets: ParticipantSet,
    recommended: FacilitationType,
    recommended_targets: Vec<ParticipantId>,
    rule: String,
    judgment: bool,
    escalation_of: Option<String>,
}

/// Stateful rule engine for one session. Feed it one tick per second.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: DetectorConfig,
    warnings: Vec<CircumstanceWarning>,
    index: HashMap<String, usize>,
    last_t: Option<u32>,
    stage: Option<(Stage, u32)>,
    /// (kind, targets) -> last emission and last terminal time.
    last_emitted: HashMap<(WarningKind, ParticipantSet), u32>,
    last_terminal: HashMap<(WarningKind, ParticipantSet), u32>,
    silence_fired: bool,
    leader_elected: bool,
    dwell: Option<(ParticipantSet, u32)>,
    introduced: ParticipantSet,
    intro: Option<IntroRun>,
    pending_intros: Vec<(ParticipantId, u32)>,
    watches: HashMap<String, ReactionWatch>,
    escalated: Vec<String>,
    last_features: Option<WindowFeatures>,
}

impl Detector {
    pub fn new(cfg: DetectorConfig) -> Self {
        Detector {
            cfg,
            warnings: Vec::new(),
            index: HashMap::new(),
            last_t: None,
            stage: None,
            last_emitted: HashMap::new(),
            last_terminal: HashMap::new(),
            silence_fired: false,
            leader_elected: false,
            dwell: None,
            introduced: ParticipantSet::EMPTY,
            intro: None,
            pending_intros: Vec::new(),
            watches: HashMap::new(),
            escalated: Vec::new(),
            last_features: None,
        }
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn warnings(&self) -> &[CircumstanceWarning] {
        &self.warnings
    }

    pub fn get(&self, id: &str) -> Option<&CircumstanceWarning> {
        self.index.get(id).map(|&i| &self.warnings[i])
    }

    pub fn open_warnings(&self) -> impl Iterator<Item = &CircumstanceWarning> {
        self.warnings.iter().filter(|w| w.state == WarningState::Open)
    }

    /// Runs every rule for one tick and returns the warnings whose state
    /// changed, in the order the changes happened.
    pub fn tick(&mut self, input: TickInput<'_>) -> Result<Vec<CircumstanceWarning>, DetectorError> {
        let t = input.features.t_end;
        if let Some(last) = self.last_t {
            if t <= last {
                return Err(DetectorError::OutOfOrderTick { t, last });
            }
        }
        self.last_t = Some(t);
        let mut changed = Vec::new();

        if input.stage != self.stage {
            self.enter_stage(input.stage, t, &mut changed);
        }
        if input.silence_run_s == 0 {
            self.silence_fired = false;
        }
        self.expire(t, input.silence_run_s, &mut changed);
        self.last_features = Some(input.features.clone());

        let speaker = input.matrix.speaker_at(t);
        self.check_reactions(t, speaker, &input, &mut changed);

        let Some((stage, stage_start)) = input.stage else {
            return Ok(changed);
        };
        match stage {
            Stage::Forming => self.forming_rules(t, speaker, &input, &mut changed),
            Stage::Storming => self.storming_rules(t, stage_start, &input, &mut changed),
            Stage::NormingPerforming => self.norming_rules(t, &input, &mut changed),
            Stage::Adjourning => {}
        }
        Ok(changed)
    }

    /// Operator accepted the warning.
    pub fn confirm(&mut self, id: &str, t: u32) -> Result<CircumstanceWarning, DetectorError> {
        self.finish(id, t, WarningState::Confirmed)
    }

    pub fn dismiss(&mut self, id: &str, t: u32) -> Result<CircumstanceWarning, DetectorError> {
        self.finish(id, t, WarningState::Dismissed)
    }

    /// Records that a program of this type was dispatched.
    pub fn on_program_dispatched(&mut self, facilitation: FacilitationType) {
        if facilitation == FacilitationType::LeaderElection {
            self.leader_elected = true;
        }
    }

    /// Starts watching the targets of a confirmed basic participation-balance
    /// warning once its program has finished at `t`.
    pub fn on_program_completed(&mut self, id: &str, t: u32) {
        if let Some(w) = self.get(id) {
            if w.state == WarningState::Confirmed
                && w.recommended == FacilitationType::ParticipationBalanceBasic
                && !self.escalated.iter().any(|e| e == id)
            {
                self.watches.insert(id.to_string(), ReactionWatch { since_t: t });
            }
        }
    }

    /// Resolves a reaction watch explicitly. Returns the escalation warning,
    /// if one is raised.
    pub fn mark_no_reaction(
        &mut self,
        id: &str,
        outcome: FacilitationOutcome,
        t: u32,
    ) -> Result<Option<CircumstanceWarning>, DetectorError> {
        let w = self.get(id).ok_or_else(|| DetectorError::UnknownWarning(id.to_string()))?;
        if w.state != WarningState::Confirmed || w.recommended != FacilitationType::ParticipationBalanceBasic {
            return Err(DetectorError::NotEscalatable(id.to_string()));
        }
        self.watches.remove(id);
        if outcome == FacilitationOutcome::Reacted || self.escalated.iter().any(|e| e == id) {
            return Ok(None);
        }
        Ok(self.escalate(id, t))
    }

    fn finish(&mut self, id: &str, t: u32, state: WarningState) -> Result<CircumstanceWarning, DetectorError> {
        let &i = self.index.get(id).ok_or_else(|| DetectorError::UnknownWarning(id.to_string()))?;
        let w = &mut self.warnings[i];
        if w.state.is_terminal() {
            return Err(DetectorError::AlreadyTerminal { id: id.to_string(), state: w.state });
        }
        w.state = state;
        w.updated_t = t;
        self.last_terminal.insert((w.kind, w.targets), t);
        Ok(w.clone())
    }

    fn enter_stage(&mut self, stage: Option<(Stage, u32)>, t: u32, changed: &mut Vec<CircumstanceWarning>) {
        self.stage = stage;
        self.dwell = None;
        self.intro = None;
        self.pending_intros.clear();
        self.silence_fired = false;
        // Open warnings belong to the stage that raised them.
        for i in 0..self.warnings.len() {
            if self.warnings[i].state == WarningState::Open {
                changed.push(self.expire_at(i, t));
            }
        }
    }

    fn expire(&mut self, t: u32, silence_run_s: u32, changed: &mut Vec<CircumstanceWarning>) {
        for i in 0..self.warnings.len() {
            let w = &self.warnings[i];
            if w.state != WarningState::Open {
                continue;
            }
            let stale = t.saturating_sub(w.t) >= self.cfg.warning_ttl_s;
            let lapsed = w.kind.ends_with_speech() && silence_run_s == 0;
            if stale || lapsed {
                changed.push(self.expire_at(i, t));
            }
        }
    }

    fn expire_at(&mut self, i: usize, t: u32) -> CircumstanceWarning {
        let w = &mut self.warnings[i];
        w.state = WarningState::Expired;
        w.updated_t = t;
        self.last_terminal.insert((w.kind, w.targets), t);
        w.clone()
    }

    fn in_cooldown(&self, key: (WarningKind, ParticipantSet), t: u32) -> bool {
        let recent = |m: &HashMap<_, u32>| m.get(&key).is_some_and(|&s| t.saturating_sub(s) < self.cfg.cooldown_s);
        let open = self.open_warnings().any(|w| (w.kind, w.targets) == key);
        open || recent(&self.last_emitted) || recent(&self.last_terminal)
    }

    /// Emits a warning unless cooldown or a busy target holds it back.
    fn raise(&mut self, t: u32, c: Candidate, input: &TickInput<'_>) -> Option<CircumstanceWarning> {
        let (stage, _) = input.stage?;
        debug_assert!(c.kind.stages().contains(&stage));
        let key = (c.kind, c.targets);
        let touched: ParticipantSet = c.recommended_targets.iter().copied().collect::<ParticipantSet>().union(c.targets);
        if self.in_cooldown(key, t) || !touched.intersection(input.busy).is_empty() {
            return None;
        }
        Some(self.push_warning(t, stage, input.silence_run_s, c))
    }

    fn push_warning(&mut self, t: u32, stage: Stage, silence_run_s: u32, c: Candidate) -> CircumstanceWarning {
        let id = format!("w{:04}", self.warnings.len() + 1);
        let window = self
            .last_features
            .as_ref()
            .map(WindowFeatures::dump)
            .expect("features recorded before rules run");
        let w = CircumstanceWarning {
            id: id.clone(),
            t,
            stage,
            kind: c.kind,
            targets: c.targets,
            recommended: c.recommended,
            recommended_targets: c.recommended_targets,
            evidence: Evidence { rule: c.rule, silence_run_s, window, operator_judgment_required: c.judgment },
            state: WarningState::Open,
            updated_t: t,
            escalation_of: c.escalation_of,
        };
        log::debug!("t={t} {} {} targets={}", w.id, w.kind, w.targets);
        self.last_emitted.insert((w.kind, w.targets), t);
        self.index.insert(id, self.warnings.len());
        self.warnings.push(w.clone());
        w
    }

    fn check_reactions(
        &mut self,
        t: u32,
        speaker: Option<ParticipantId>,
        input: &TickInput<'_>,
        changed: &mut Vec<CircumstanceWarning>,
    ) {
        let mut ids: Vec<String> = self.watches.keys().cloned().collect();
        ids.sort();
        for id in ids {
            let since = self.watches[&id].since_t;
            let targets = self.get(&id).map(|w| w.targets).unwrap_or_default();
            if t <= since {
                continue;
            }
            if speaker.is_some_and(|s| targets.contains(s)) {
                self.watches.remove(&id);
            } else if t - since >= self.cfg.no_reaction_window_s {
                self.watches.remove(&id);
                if input.stage.is_some_and(|(s, _)| s == Stage::NormingPerforming) {
                    changed.extend(self.escalate(&id, t));
                }
            }
        }
    }

    /// One-step ladder: basic participation balance becomes strengthened.
    fn escalate(&mut self, id: &str, t: u32) -> Option<CircumstanceWarning> {
        let base = self.get(id)?.clone();
        let features = self.last_features.as_ref()?;
        let inactive = argmin(&features.speaking_time, base.targets)?;
        let active = argmax(&features.speaking_time, ParticipantSet::single(inactive).complement())?;
        self.escalated.push(id.to_string());
        let (stage, _) = self.stage?;
        let c = Candidate {
            kind: WarningKind::DominanceImbalance,
            targets: [active, inactive].into_iter().collect(),
            recommended: FacilitationType::ParticipationBalanceStrengthened,
            recommended_targets: vec![active, inactive],
            rule: format!(
                "no speech from {} within {} s after basic facilitation of {}",
                base.targets, self.cfg.no_reaction_window_s, base.id
            ),
            judgment: false,
            escalation_of: Some(base.id.clone()),
        };
        Some(self.push_warning(t, stage, 0, c))
    }

    fn forming_rules(
        &mut self,
        t: u32,
        speaker: Option<ParticipantId>,
        input: &TickInput<'_>,
        changed: &mut Vec<CircumstanceWarning>,
    ) {
        let gap = self.cfg.turn_gap_s;
        match (speaker, self.intro) {
            (Some(s), Some(mut run)) if run.speaker == s && t - run.last_speech_t - 1 <= gap => {
                run.speech_s += 1;
                run.last_speech_t = t;
                self.intro = Some(run);
            }
            (Some(s), current) => {
                if let Some(run) = current {
                    self.finish_intro(run, t);
                }
                self.intro = (!self.introduced.contains(s)).then_some(IntroRun {
                    speaker: s,
                    speech_s: 1,
                    last_speech_t: t,
                });
            }
            (None, Some(run)) if t - run.last_speech_t > gap => {
                self.finish_intro(run, t);
                self.intro = None;
            }
            (None, _) => {}
        }

        let pending = std::mem::take(&mut self.pending_intros);
        for (p, speech_s) in pending {
            let c = Candidate {
                kind: WarningKind::IntroTooShort,
                targets: ParticipantSet::single(p),
                recommended: FacilitationType::SpeechControl,
                recommended_targets: vec![p],
                rule: format!("introduction of {p} lasted {speech_s} s < {} s", self.cfg.intro_min_s),
                judgment: false,
                escalation_of: None,
            };
            if input.busy.contains(p) {
                // Deferred, not dropped.
                self.pending_intros.push((p, speech_s));
            } else {
                changed.extend(self.raise(t, c, input));
            }
        }
    }

    fn finish_intro(&mut self, run: IntroRun, _t: u32) {
        self.introduced.insert(run.speaker);
        if run.speech_s < self.cfg.intro_min_s {
            self.pending_intros.push((run.speaker, run.speech_s));
        }
    }

    fn storming_rules(&mut self, t: u32, stage_start: u32, input: &TickInput<'_>, changed: &mut Vec<CircumstanceWarning>) {
        let silence = input.silence_run_s;
        if silence > self.cfg.silence_threshold_s && !self.silence_fired {
            let c = if self.leader_elected {
                self.all_silent_candidate(silence)
            } else {
                let cumulative = speaking_time(input.matrix.slice(stage_start..=t));
                let leader = argmax(&cumulative, ParticipantSet::all()).expect("non-empty group");
                Candidate {
                    kind: WarningKind::NoLeader,
                    targets: ParticipantSet::all(),
                    recommended: FacilitationType::LeaderElection,
                    recommended_targets: vec![leader],
                    rule: format!(
                        "silence {silence} s > {} s with no leader; most cumulative speech {leader} {:?}",
                        self.cfg.silence_threshold_s, cumulative
                    ),
                    judgment: false,
                    escalation_of: None,
                }
            };
            if let Some(w) = self.raise(t, c, input) {
                self.silence_fired = true;
                changed.push(w);
            }
        }

        if let Some(((a, b), share)) = detect_conflict(&input.features.turn_counts, &self.cfg) {
            let c = Candidate {
                kind: WarningKind::DyadConflict,
                targets: [a, b].into_iter().collect(),
                recommended: FacilitationType::ConflictSolving,
                recommended_targets: vec![a, b],
                rule: format!(
                    "dyad {a}-{b} carries {share:.3} >= {} of {} turns",
                    self.cfg.conflict_dyad_share,
                    input.features.turn_counts.total()
                ),
                judgment: true,
                escalation_of: None,
            };
            changed.extend(self.raise(t, c, input));
        }

        let horizon = self.cfg.interdependence_horizon_s;
        if t + 1 >= stage_start + horizon {
            let rows = input.matrix.slice(t + 1 - horizon..=t);
            let turns = count_turns(rows, self.cfg.turn_gap_s);
            let speech = speaking_time(rows);
            if turns.total() >= self.cfg.conflict_min_switches {
                for (i, &a) in ParticipantId::ALL.iter().enumerate() {
                    for &b in &ParticipantId::ALL[i + 1..] {
                        let both_spoke = speech[a.slot()].min(speech[b.slot()]) >= self.cfg.interdependence_min_speech_s;
                        if both_spoke && turns.pair_total(a, b) == 0 {
                            let c = Candidate {
                                kind: WarningKind::LowInterdependencePair,
                                targets: [a, b].into_iter().collect(),
                                recommended: FacilitationType::ConnectionTickle,
                                recommended_targets: vec![a, b],
                                rule: format!("no turns between {a} and {b} in the last {horizon} s"),
                                judgment: true,
                                escalation_of: None,
                            };
                            changed.extend(self.raise(t, c, input));
                        }
                    }
                }
            }
        }
    }

    fn all_silent_candidate(&self, silence: u32) -> Candidate {
        Candidate {
            kind: WarningKind::AllSilent,
            targets: ParticipantSet::all(),
            recommended: FacilitationType::SilenceBreaking,
            recommended_targets: ParticipantId::ALL.to_vec(),
            rule: format!("silence {silence} s > {} s", self.cfg.silence_threshold_s),
            judgment: false,
            escalation_of: None,
        }
    }

    fn norming_rules(&mut self, t: u32, input: &TickInput<'_>, changed: &mut Vec<CircumstanceWarning>) {
        let silence = input.silence_run_s;
        if silence > self.cfg.silence_threshold_s && !self.silence_fired {
            let c = self.all_silent_candidate(silence);
            if let Some(w) = self.raise(t, c, input) {
                self.silence_fired = true;
                changed.push(w);
            }
        }

        let f = input.features;
        let total = f.total_speech();
        let part = &f.dominance;
        let quiet = part.dominant.complement();
        let quiet_share = if total == 0 {
            1.0
        } else {
            quiet.iter().map(|p| f.speaking_time[p.slot()]).sum::<u32>() as f64 / total as f64
        };
        let imbalanced = !part.degenerate && !quiet.is_empty() && quiet_share < self.cfg.imbalance_max_share;
        self.dwell = match self.dwell {
            Some((set, since)) if imbalanced && set == part.dominant => Some((set, since)),
            _ if imbalanced => Some((part.dominant, t)),
            _ => None,
        };
        if let Some((dominant, since)) = self.dwell {
            if t - since + 1 >= self.cfg.imbalance_dwell_s {
                let c = Candidate {
                    kind: WarningKind::DominanceImbalance,
                    targets: quiet,
                    recommended: FacilitationType::ParticipationBalanceBasic,
                    recommended_targets: quiet.to_vec(),
                    rule: format!(
                        "dominant {dominant} for {} s; others hold {quiet_share:.3} < {} of speech",
                        t - since + 1,
                        self.cfg.imbalance_max_share
                    ),
                    judgment: false,
                    escalation_of: None,
                };
                changed.extend(self.raise(t, c, input));
            }
        }
    }
}
