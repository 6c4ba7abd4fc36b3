//! Compiles a confirmed facilitation into a timed, per-stand command program.
//!
//! Programs are open loop. Every stand a program touches ends with
//! `return_home`, commands on one stand never overlap, and commands in a sync
//! group share their start offset.

mod command;
mod program;

pub use command::{StandCommand, StandVerb};
pub use program::{ChoreographyProgram, FacilitationType, ProgramViolation, TargetArity};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{home_path, follow_home_path, wrap_deg, Kinematics, Pose, TableGeometry};
use crate::participant::{ParticipantId, ParticipantSet, GROUP_SIZE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("{facilitation} takes {expected} distinct targets, got [{}]", got.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", "))]
    ArityMismatch {
        facilitation: FacilitationType,
        expected: String,
        got: Vec<ParticipantId>,
    },
    #[error("stand {0} is busy")]
    StandBusy(ParticipantId),
    #[error("compiled program violates an invariant: {0}")]
    Invalid(#[from] ProgramViolation),
}

/// Distances, angles and timings used when compiling programs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MovementParams {
    /// Inactive member's step toward the centre (basic participation balance).
    pub step_out_mm: f64,
    /// Synchronized step of silence breaking.
    pub silence_step_mm: f64,
    /// How far stands move in when gathering.
    pub gather_mm: f64,
    /// Push-out of a single stand (icebreaking, leader election).
    pub push_mm: f64,
    /// Each conflicting stand's approach toward the other.
    pub approach_mm: f64,
    /// Back-and-forth amplitude and cycles for speech control.
    pub nudge_mm: f64,
    pub nudge_cycles: u32,
    /// Distance the active stand stops short of the inactive one.
    pub adjacency_mm: f64,
    /// Joint advance toward the centre in strengthened balance.
    pub pull_mm: f64,
    pub attention_rotation_deg: f64,
    pub facing_rotation_deg: f64,
    pub blink_on_ms: u32,
    pub blink_off_ms: u32,
    pub blink_repeats: u32,
    pub hint_ms: u64,
    pub phase_gap_ms: u64,
    /// Idle time between consecutive commands on one stand.
    pub settle_ms: u64,
    /// Floor for return-home commands that barely move.
    pub min_return_ms: u64,
    pub max_program_ms: u64,
    pub kinematics: Kinematics,
    pub table: TableGeometry,
}

impl Default for MovementParams {
    fn default() -> Self {
        MovementParams {
            step_out_mm: 60.0,
            silence_step_mm: 50.0,
            gather_mm: 100.0,
            push_mm: 60.0,
            approach_mm: 80.0,
            nudge_mm: 20.0,
            nudge_cycles: 3,
            adjacency_mm: 120.0,
            pull_mm: 60.0,
            attention_rotation_deg: 360.0,
            facing_rotation_deg: 180.0,
            blink_on_ms: 300,
            blink_off_ms: 300,
            blink_repeats: 4,
            hint_ms: 1500,
            phase_gap_ms: 500,
            settle_ms: 50,
            min_return_ms: 100,
            max_program_ms: 30_000,
            kinematics: Kinematics::default(),
            table: TableGeometry::default(),
        }
    }
}

impl MovementParams {
    pub fn blink(&self) -> StandVerb {
        StandVerb::Blink {
            on_ms: self.blink_on_ms,
            off_ms: self.blink_off_ms,
            repeats: self.blink_repeats,
        }
    }
}

/// Applies `verb` for at most `dt_ms` of motion starting at `pose`.
pub fn step_pose(pose: &Pose, home: &Pose, verb: &StandVerb, kin: &Kinematics, dt_ms: u64) -> Pose {
    match verb {
        StandVerb::MoveForward { mm } => pose.translated(mm.min(kin.reach_mm(dt_ms))),
        StandVerb::MoveBackward { mm } => pose.translated(-mm.min(kin.reach_mm(dt_ms))),
        StandVerb::RotateCcw { deg } => pose.rotated(deg.min(kin.reach_deg(dt_ms))),
        StandVerb::RotateCw { deg } => pose.rotated(-deg.min(kin.reach_deg(dt_ms))),
        StandVerb::ReturnHome => follow_home_path(pose, &home_path(pose, home), kin, dt_ms),
        StandVerb::Blink { .. } | StandVerb::ShowScreenHint { .. } => *pose,
    }
}

/// Signed rotation (positive counter-clockwise) as a verb; `None` if negligible.
fn turn_verb(deg: f64) -> Option<StandVerb> {
    let deg = wrap_deg(deg);
    if deg.abs() < 1e-6 {
        None
    } else if deg > 0.0 {
        Some(StandVerb::RotateCcw { deg })
    } else {
        Some(StandVerb::RotateCw { deg: -deg })
    }
}

struct Builder<'a> {
    params: &'a MovementParams,
    commands: Vec<StandCommand>,
    sync_groups: Vec<Vec<usize>>,
    free_at: [u64; GROUP_SIZE],
    poses: [Pose; GROUP_SIZE],
    phase_start: u64,
}

impl<'a> Builder<'a> {
    fn new(params: &'a MovementParams) -> Self {
        Builder {
            params,
            commands: Vec::new(),
            sync_groups: Vec::new(),
            free_at: [0; GROUP_SIZE],
            poses: ParticipantId::ALL.map(|p| params.table.home_pose(p)),
            phase_start: 0,
        }
    }

    fn home(&self, p: ParticipantId) -> Pose {
        self.params.table.home_pose(p)
    }

    fn duration(&self, p: ParticipantId, verb: &StandVerb) -> u64 {
        let kin = &self.params.kinematics;
        match verb {
            StandVerb::MoveForward { mm } | StandVerb::MoveBackward { mm } => kin.translate_ms(*mm),
            StandVerb::RotateCw { deg } | StandVerb::RotateCcw { deg } => kin.rotate_ms(*deg),
            StandVerb::Blink { on_ms, off_ms, repeats } => (*on_ms as u64 + *off_ms as u64) * *repeats as u64,
            StandVerb::ShowScreenHint { .. } => self.params.hint_ms,
            StandVerb::ReturnHome => home_path(&self.poses[p.slot()], &self.home(p))
                .duration_ms(kin)
                .max(self.params.min_return_ms),
        }
    }

    fn push_at(&mut self, p: ParticipantId, verb: StandVerb, start: u64) -> usize {
        let duration = self.duration(p, &verb);
        let home = self.home(p);
        self.poses[p.slot()] = step_pose(&self.poses[p.slot()], &home, &verb, &self.params.kinematics, u64::MAX);
        self.free_at[p.slot()] = start + duration + self.params.settle_ms;
        self.commands.push(StandCommand { stand: p, verb, start_offset_ms: start, duration_ms: duration });
        self.commands.len() - 1
    }

    fn ready(&self, p: ParticipantId) -> u64 {
        self.free_at[p.slot()].max(self.phase_start)
    }

    /// Appends a command on one stand after its previous one.
    fn seq(&mut self, p: ParticipantId, verb: StandVerb) {
        let start = self.ready(p);
        self.push_at(p, verb, start);
    }

    /// Releases commands on several stands on the same tick.
    fn sync(&mut self, steps: Vec<(ParticipantId, StandVerb)>) {
        let start = steps.iter().map(|(p, _)| self.ready(*p)).max().unwrap_or(self.phase_start);
        let idx: Vec<usize> = steps.into_iter().map(|(p, v)| self.push_at(p, v, start)).collect();
        if idx.len() > 1 {
            self.sync_groups.push(idx);
        }
    }

    fn sync_all(&mut self, stands: &[ParticipantId], verb: StandVerb) {
        self.sync(stands.iter().map(|p| (*p, verb.clone())).collect());
    }

    /// Starts a new phase after every stand has finished, plus the phase gap.
    fn barrier(&mut self) {
        let end = self.free_at.iter().copied().max().unwrap_or(0);
        self.phase_start = end.saturating_sub(self.params.settle_ms) + self.params.phase_gap_ms;
    }

    fn finish(self, facilitation: FacilitationType, targets: &[ParticipantId]) -> Result<ChoreographyProgram, PlanError> {
        let program = ChoreographyProgram {
            program_id: program_id(facilitation, targets, self.params),
            facilitation,
            targets: targets.to_vec(),
            commands: self.commands,
            sync_groups: self.sync_groups,
        };
        program.check(self.params.max_program_ms)?;
        Ok(program)
    }
}

/// Stable id derived from the compile inputs.
fn program_id(facilitation: FacilitationType, targets: &[ParticipantId], params: &MovementParams) -> String {
    let canonical = serde_json::json!({
        "facilitation": facilitation,
        "targets": targets,
        "params": params,
    })
    .to_string();
    let ids: String = targets.iter().map(ToString::to_string).collect();
    format!("{}-{}-{:08x}", facilitation.name(), ids, crc32fast::hash(canonical.as_bytes()))
}

fn check_targets(facilitation: FacilitationType, targets: &[ParticipantId]) -> Result<ParticipantSet, PlanError> {
    let set: ParticipantSet = targets.iter().copied().collect();
    if set.len() != targets.len() || !facilitation.arity().accepts(targets.len()) {
        return Err(PlanError::ArityMismatch {
            facilitation,
            expected: facilitation.arity().to_string(),
            got: targets.to_vec(),
        });
    }
    Ok(set)
}

fn check_free(touched: ParticipantSet, busy: ParticipantSet) -> Result<(), PlanError> {
    match touched.intersection(busy).iter().next() {
        Some(p) => Err(PlanError::StandBusy(p)),
        None => Ok(()),
    }
}

/// Gather toward the centre, rotate together, return home.
fn gather_phase(b: &mut Builder<'_>, stands: &[ParticipantId]) {
    let p = b.params;
    b.sync_all(stands, StandVerb::MoveForward { mm: p.gather_mm });
    b.sync_all(stands, StandVerb::RotateCw { deg: p.attention_rotation_deg });
    b.sync_all(stands, StandVerb::ReturnHome);
    b.barrier();
}

/// Compiles any facilitation. `busy` lists stands already executing a program.
pub fn compile(
    facilitation: FacilitationType,
    targets: &[ParticipantId],
    params: &MovementParams,
    busy: ParticipantSet,
) -> Result<ChoreographyProgram, PlanError> {
    let set = check_targets(facilitation, targets)?;
    match facilitation {
        FacilitationType::Icebreaking => return compile_icebreaking(targets, params, busy),
        FacilitationType::ConflictSolving => return compile_conflict_solving(targets, params, busy),
        FacilitationType::ParticipationBalanceStrengthened => {
            return compile_strengthened(targets[0], targets[1], params, busy)
        }
        FacilitationType::Farewell => return compile_farewell(targets, params, busy),
        _ => {}
    }
    let mut b = Builder::new(params);
    match facilitation {
        FacilitationType::SpeechControl => {
            let t = targets[0];
            check_free(set, busy)?;
            for _ in 0..params.nudge_cycles {
                b.seq(t, StandVerb::MoveForward { mm: params.nudge_mm });
                b.seq(t, StandVerb::MoveBackward { mm: params.nudge_mm });
            }
            b.seq(t, StandVerb::ReturnHome);
        }
        FacilitationType::LeaderElection => {
            check_free(ParticipantSet::all(), busy)?;
            let leader = targets[0];
            gather_phase(&mut b, &ParticipantId::ALL);
            let mut push = vec![(leader, StandVerb::MoveForward { mm: params.push_mm })];
            push.extend(ParticipantSet::single(leader).complement().iter().map(|p| (p, params.blink())));
            b.sync(push);
            b.sync_all(&ParticipantId::ALL, StandVerb::ReturnHome);
        }
        FacilitationType::ConnectionTickle => {
            let receiver = targets[1];
            check_free(ParticipantSet::single(receiver), busy)?;
            b.seq(receiver, params.blink());
            b.seq(receiver, StandVerb::ReturnHome);
        }
        FacilitationType::SilenceBreaking => {
            check_free(set, busy)?;
            b.sync_all(targets, StandVerb::MoveForward { mm: params.silence_step_mm });
            b.sync_all(targets, StandVerb::RotateCw { deg: params.attention_rotation_deg });
            b.sync_all(targets, StandVerb::ReturnHome);
        }
        FacilitationType::ParticipationBalanceBasic => {
            check_free(set, busy)?;
            let ordered = set.to_vec();
            b.sync_all(&ordered, StandVerb::MoveForward { mm: params.step_out_mm });
            b.sync_all(&ordered, StandVerb::RotateCw { deg: params.attention_rotation_deg });
            b.sync_all(&ordered, StandVerb::ReturnHome);
        }
        FacilitationType::Icebreaking
        | FacilitationType::ConflictSolving
        | FacilitationType::ParticipationBalanceStrengthened
        | FacilitationType::Farewell => unreachable!("handled above"),
    }
    b.finish(facilitation, targets)
}

/// All stands gather and rotate, then each stand in `order` steps out, turns
/// its screen to the group with an intro card, and returns before the next.
pub fn compile_icebreaking(
    order: &[ParticipantId],
    params: &MovementParams,
    busy: ParticipantSet,
) -> Result<ChoreographyProgram, PlanError> {
    let set = check_targets(FacilitationType::Icebreaking, order)?;
    check_free(set, busy)?;
    let mut b = Builder::new(params);
    gather_phase(&mut b, order);
    for &p in order {
        b.seq(p, StandVerb::MoveForward { mm: params.push_mm });
        b.seq(p, StandVerb::RotateCw { deg: params.facing_rotation_deg });
        b.seq(p, StandVerb::ShowScreenHint { token: "intro_card".into() });
        b.seq(p, StandVerb::ReturnHome);
        b.barrier();
    }
    b.finish(FacilitationType::Icebreaking, order)
}

/// The two stands turn to each other, approach, blink, back off and go home.
pub fn compile_conflict_solving(
    pair: &[ParticipantId],
    params: &MovementParams,
    busy: ParticipantSet,
) -> Result<ChoreographyProgram, PlanError> {
    let set = check_targets(FacilitationType::ConflictSolving, pair)?;
    check_free(set, busy)?;
    let (a, c) = (pair[0], pair[1]);
    let mut b = Builder::new(params);
    let (ha, hc) = (b.home(a), b.home(c));
    let turns: Vec<_> = [(a, ha, hc), (c, hc, ha)]
        .into_iter()
        .filter_map(|(p, from, to)| {
            turn_verb(from.bearing_to(to.x_mm(), to.y_mm()) - from.heading_deg()).map(|v| (p, v))
        })
        .collect();
    if !turns.is_empty() {
        b.sync(turns);
    }
    b.sync_all(pair, StandVerb::MoveForward { mm: params.approach_mm });
    b.sync_all(pair, params.blink());
    b.sync_all(pair, StandVerb::MoveBackward { mm: params.approach_mm });
    b.sync_all(pair, StandVerb::ReturnHome);
    b.finish(FacilitationType::ConflictSolving, pair)
}

/// The active member's stand drives up to the inactive one, then both
/// advance toward the centre together and return home.
pub fn compile_strengthened(
    active: ParticipantId,
    inactive: ParticipantId,
    params: &MovementParams,
    busy: ParticipantSet,
) -> Result<ChoreographyProgram, PlanError> {
    let targets = [active, inactive];
    let set = check_targets(FacilitationType::ParticipationBalanceStrengthened, &targets)?;
    check_free(set, busy)?;
    let mut b = Builder::new(params);
    let (from, to) = (b.home(active), b.home(inactive));
    if let Some(v) = turn_verb(from.bearing_to(to.x_mm(), to.y_mm()) - from.heading_deg()) {
        b.seq(active, v);
    }
    let approach = (from.distance_mm(&to) - params.adjacency_mm).max(0.0);
    if approach > 0.0 {
        b.seq(active, StandVerb::MoveForward { mm: approach });
    }
    b.barrier();
    let pose = b.poses[active.slot()];
    if let Some(v) = turn_verb(pose.bearing_to(0.0, 0.0) - pose.heading_deg()) {
        b.seq(active, v);
    }
    b.sync_all(&targets, StandVerb::MoveForward { mm: params.pull_mm });
    b.sync_all(&targets, StandVerb::ReturnHome);
    b.finish(FacilitationType::ParticipationBalanceStrengthened, &targets)
}

/// All stands gather and rotate, then each in turn faces the group showing
/// its owner's contact QR code.
pub fn compile_farewell(
    stands: &[ParticipantId],
    params: &MovementParams,
    busy: ParticipantSet,
) -> Result<ChoreographyProgram, PlanError> {
    let set = check_targets(FacilitationType::Farewell, stands)?;
    check_free(set, busy)?;
    let mut b = Builder::new(params);
    gather_phase(&mut b, stands);
    for &p in stands {
        b.seq(p, StandVerb::RotateCw { deg: params.facing_rotation_deg });
        b.seq(p, StandVerb::ShowScreenHint { token: "qr_code".into() });
        b.seq(p, StandVerb::ReturnHome);
        b.barrier();
    }
    b.finish(FacilitationType::Farewell, stands)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(i: u32) -> ParticipantId {
        ParticipantId::new(i).unwrap()
    }

    fn params() -> MovementParams {
        MovementParams::default()
    }

    #[test]
    fn silence_breaking_is_fully_synchronized() {
        let prog = compile(FacilitationType::SilenceBreaking, &ParticipantId::ALL, &params(), ParticipantSet::EMPTY).unwrap();
        assert_eq!(prog.commands.len(), 12);
        assert_eq!(prog.sync_groups.len(), 3);
        for group in &prog.sync_groups {
            assert_eq!(group.len(), 4);
        }
        for stand in ParticipantId::ALL {
            let verbs: Vec<_> = prog.commands_for(stand).into_iter().map(|(_, c)| c.verb.clone()).collect();
            assert_eq!(
                verbs,
                vec![
                    StandVerb::MoveForward { mm: 50.0 },
                    StandVerb::RotateCw { deg: 360.0 },
                    StandVerb::ReturnHome
                ]
            );
        }
    }

    #[test]
    fn basic_balance_only_moves_targets() {
        let prog = compile(FacilitationType::ParticipationBalanceBasic, &[p(3)], &params(), ParticipantSet::EMPTY).unwrap();
        assert_eq!(prog.stands(), ParticipantSet::single(p(3)));
        let verbs: Vec<_> = prog.commands.iter().map(|c| c.verb.clone()).collect();
        assert_eq!(
            verbs,
            vec![StandVerb::MoveForward { mm: 60.0 }, StandVerb::RotateCw { deg: 360.0 }, StandVerb::ReturnHome]
        );
    }

    #[test]
    fn tickle_blinks_receiver_without_motion() {
        let prog = compile(FacilitationType::ConnectionTickle, &[p(1), p(2)], &params(), ParticipantSet::EMPTY).unwrap();
        assert_eq!(prog.stands(), ParticipantSet::single(p(2)));
        assert_eq!(prog.commands[0].verb, StandVerb::Blink { on_ms: 300, off_ms: 300, repeats: 4 });
        assert_eq!(prog.commands[0].duration_ms, 2400);
        assert_eq!(prog.commands[1].verb, StandVerb::ReturnHome);
        assert!(!prog.commands.iter().any(|c| matches!(c.verb, StandVerb::MoveForward { .. })));
    }

    #[test]
    fn icebreaking_structure() {
        let order = [p(2), p(1), p(4), p(3)];
        let prog = compile_icebreaking(&order, &params(), ParticipantSet::EMPTY).unwrap();
        // gather, rotate, return
        assert_eq!(prog.sync_groups.len(), 3);
        let hints: Vec<_> = prog
            .commands
            .iter()
            .filter(|c| matches!(c.verb, StandVerb::ShowScreenHint { .. }))
            .collect();
        assert_eq!(hints.iter().map(|c| c.stand).collect::<Vec<_>>(), order.to_vec());
        assert!(hints.windows(2).all(|w| w[0].end_ms() < w[1].start_offset_ms));
        assert!(prog.duration_ms() <= 30_000);
        assert!(matches!(
            compile_icebreaking(&order[..3], &params(), ParticipantSet::EMPTY),
            Err(PlanError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn conflict_pair_must_be_distinct_and_free() {
        let prog = compile_conflict_solving(&[p(2), p(4)], &params(), ParticipantSet::EMPTY).unwrap();
        assert_eq!(prog.stands(), [p(2), p(4)].into_iter().collect());
        assert!(matches!(
            compile_conflict_solving(&[p(2), p(2)], &params(), ParticipantSet::EMPTY),
            Err(PlanError::ArityMismatch { .. })
        ));
        assert_eq!(
            compile_conflict_solving(&[p(2), p(4)], &params(), ParticipantSet::single(p(4))),
            Err(PlanError::StandBusy(p(4)))
        );
    }

    #[test]
    fn strengthened_rejects_same_member() {
        assert!(matches!(
            compile_strengthened(p(1), p(1), &params(), ParticipantSet::EMPTY),
            Err(PlanError::ArityMismatch { .. })
        ));
        let prog = compile_strengthened(p(1), p(3), &params(), ParticipantSet::EMPTY).unwrap();
        assert_eq!(prog.sync_groups.len(), 2);
    }

    #[test]
    fn leader_election_pushes_one_and_blinks_others() {
        let prog = compile(FacilitationType::LeaderElection, &[p(2)], &params(), ParticipantSet::EMPTY).unwrap();
        let blinkers: ParticipantSet = prog
            .commands
            .iter()
            .filter(|c| matches!(c.verb, StandVerb::Blink { .. }))
            .map(|c| c.stand)
            .collect();
        assert_eq!(blinkers, ParticipantSet::single(p(2)).complement());
    }

    #[test]
    fn farewell_needs_registered_stands() {
        assert!(matches!(
            compile_farewell(&[], &params(), ParticipantSet::EMPTY),
            Err(PlanError::ArityMismatch { .. })
        ));
        assert_eq!(
            compile_farewell(&ParticipantId::ALL, &params(), ParticipantSet::single(p(1))),
            Err(PlanError::StandBusy(p(1)))
        );
    }

    #[test]
    fn compile_is_deterministic() {
        for f in FacilitationType::ALL {
            let targets: Vec<_> = match f.arity() {
                TargetArity::All => ParticipantId::ALL.to_vec(),
                TargetArity::Exactly(n) | TargetArity::Between(n, _) => ParticipantId::ALL[..n].to_vec(),
            };
            let a = compile(f, &targets, &params(), ParticipantSet::EMPTY).unwrap();
            let b = compile(f, &targets, &params(), ParticipantSet::EMPTY).unwrap();
            assert_eq!(a, b);
            assert_eq!(
                serde_json::to_string(&a).unwrap(),
                serde_json::to_string(&b).unwrap()
            );
        }
    }
}
