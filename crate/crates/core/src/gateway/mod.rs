//! Stand gateway: sessions the four stands, releases program commands on a
//! shared clock, retries unacknowledged frames and recovers from faults.

pub mod http;
mod link;
mod sim;
pub mod wire;

pub use link::{LinkError, LinkFaults, LocalLink, StandLink, TcpLink};
pub use sim::{simulated_stand_step, Executed, LinkState, SimStand, SimStandServer, StandFaults, StandState};
pub use wire::{Ack, AckStatus, CommandFrame, WireError};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Kinematics, Pose, TableGeometry};
use crate::participant::{ParticipantId, ParticipantSet, GROUP_SIZE};
use crate::planner::{
    compile, ChoreographyProgram, FacilitationType, MovementParams, PlanError, ProgramViolation, StandCommand,
    StandVerb,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("stand {0} is busy")]
    StandBusy(ParticipantId),
    #[error("link to stand {0} is lost")]
    LinkLost(ParticipantId),
    #[error("stand {0} is obstructed")]
    Obstructed(ParticipantId),
    #[error("{0} cannot tickle themselves")]
    SelfTickle(ParticipantId),
    #[error("invalid program: {0}")]
    InvalidProgram(#[from] ProgramViolation),
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing gateway config: {0}")]
    Toml(#[from] toml::de::Error),
}

/// How command start offsets map to wall time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pacing {
    /// Wait for each start offset and for the program to finish.
    #[default]
    RealTime,
    /// Send as fast as acks come back; for replays and tests.
    Immediate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    /// Resends of an unacknowledged frame before the link is declared lost.
    pub retries: u32,
    pub ack_timeout_ms: u64,
    pub pacing: Pacing,
    pub table: TableGeometry,
    pub kinematics: Kinematics,
    /// TCP address per stand, e.g. `P1 = "192.168.4.11:7000"`.
    pub stands: BTreeMap<ParticipantId, String>,
    /// Where the tickle endpoint listens.
    pub tickle_addr: Option<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            retries: 3,
            ack_timeout_ms: 500,
            pacing: Pacing::RealTime,
            table: TableGeometry::default(),
            kinematics: Kinematics::default(),
            stands: BTreeMap::new(),
            tickle_addr: None,
        }
    }
}

impl GatewayConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    fn ack_timeout(&self) -> Duration {
        Duration::from_millis(self.ack_timeout_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandStatus {
    Ok,
    Obstructed,
    Error,
    /// Retries exhausted or the link dropped.
    Lost,
    /// Never sent because an earlier command on the stand failed.
    Cancelled,
}

impl From<AckStatus> for CommandStatus {
    fn from(s: AckStatus) -> Self {
        match s {
            AckStatus::Ok => CommandStatus::Ok,
            AckStatus::Obstructed => CommandStatus::Obstructed,
            AckStatus::Error => CommandStatus::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    /// Index into the program's command list; `None` for recovery commands.
    pub index: Option<usize>,
    pub stand: ParticipantId,
    pub verb: String,
    pub seq: Option<u64>,
    pub status: CommandStatus,
    pub attempts: u32,
    pub latency_us: u64,
    pub pose: Option<Pose>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandOutcome {
    Completed,
    Obstructed,
    Error,
    LinkLost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub program_id: String,
    pub facilitation: FacilitationType,
    /// One record per program command, in program order.
    pub commands: Vec<CommandRecord>,
    /// Best-effort return-home commands issued after a fault.
    pub recoveries: Vec<CommandRecord>,
    pub outcomes: BTreeMap<ParticipantId, StandOutcome>,
    pub final_poses: BTreeMap<ParticipantId, Pose>,
    pub elapsed_ms: u64,
}

impl ExecutionReport {
    pub fn all_ok(&self) -> bool {
        self.outcomes.values().all(|o| *o == StandOutcome::Completed)
    }

    /// The report with wall-clock fields zeroed, for byte-stable logs.
    pub fn without_timing(&self) -> ExecutionReport {
        let mut r = self.clone();
        r.elapsed_ms = 0;
        for c in r.commands.iter_mut().chain(r.recoveries.iter_mut()) {
            c.latency_us = 0;
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TickleOutcome {
    Delivered { report: ExecutionReport },
    /// The receiver's stand was busy; the tickle runs when it frees up.
    Queued,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickleRecord {
    pub from: ParticipantId,
    pub to: ParticipantId,
    pub queued: bool,
    pub delivered: bool,
}

struct Slot {
    link: Option<Box<dyn StandLink>>,
    state: StandState,
    next_seq: u64,
}

struct Sent {
    seq: u64,
    attempts: u32,
    latency: Duration,
    result: Result<Ack, LinkError>,
}

/// Handles to the simulated stands behind a [`Gateway::simulated`].
#[derive(Clone)]
pub struct SimHandles {
    pub stands: Vec<Arc<Mutex<SimStand>>>,
    pub links: Vec<LocalLink>,
}

impl SimHandles {
    pub fn stand(&self, p: ParticipantId) -> std::sync::MutexGuard<'_, SimStand> {
        self.stands[p.slot()].lock().expect("stand lock")
    }

    pub fn faults(&self, p: ParticipantId) -> Arc<Mutex<LinkFaults>> {
        self.links[p.slot()].faults()
    }
}

pub struct Gateway {
    cfg: GatewayConfig,
    params: MovementParams,
    slots: Vec<Mutex<Slot>>,
    busy: Mutex<ParticipantSet>,
    queued_tickles: Mutex<Vec<(ParticipantId, ParticipantId)>>,
    tickle_log: Mutex<Vec<TickleRecord>>,
}

impl Gateway {
    /// Gateway over the given links; stands without a link start out Lost.
    pub fn new(cfg: GatewayConfig, mut links: BTreeMap<ParticipantId, Box<dyn StandLink>>) -> Self {
        let slots = ParticipantId::ALL
            .iter()
            .map(|&p| {
                let link = links.remove(&p);
                let mut state = StandState::at_home(p, &cfg.table);
                if link.is_none() {
                    state.link = LinkState::Lost;
                }
                Mutex::new(Slot { link, state, next_seq: 1 })
            })
            .collect();
        let params = MovementParams { kinematics: cfg.kinematics, table: cfg.table, ..MovementParams::default() };
        Gateway {
            cfg,
            params,
            slots,
            busy: Mutex::new(ParticipantSet::EMPTY),
            queued_tickles: Mutex::new(Vec::new()),
            tickle_log: Mutex::new(Vec::new()),
        }
    }

    /// Gateway wired to four in-process simulated stands.
    pub fn simulated(cfg: GatewayConfig, faults: [StandFaults; GROUP_SIZE]) -> (Self, SimHandles) {
        let mut links: BTreeMap<ParticipantId, Box<dyn StandLink>> = BTreeMap::new();
        let mut handles = SimHandles { stands: Vec::new(), links: Vec::new() };
        for p in ParticipantId::ALL {
            let stand = SimStand::new(p, cfg.kinematics, cfg.table).with_faults(faults[p.slot()]);
            let stand = Arc::new(Mutex::new(stand));
            let link = LocalLink::new(stand.clone());
            handles.stands.push(stand);
            handles.links.push(link.clone());
            links.insert(p, Box::new(link));
        }
        (Gateway::new(cfg, links), handles)
    }

    /// Connects to every stand listed in the config over TCP.
    pub fn connect(cfg: GatewayConfig) -> Self {
        let mut links: BTreeMap<ParticipantId, Box<dyn StandLink>> = BTreeMap::new();
        for (&p, addr) in &cfg.stands {
            match TcpLink::connect(addr, Duration::from_secs(2)) {
                Ok(link) => {
                    links.insert(p, Box::new(link));
                }
                Err(e) => log::warn!("stand {p} at {addr} unreachable: {e}"),
            }
        }
        Gateway::new(cfg, links)
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn movement_params(&self) -> &MovementParams {
        &self.params
    }

    pub fn set_movement_params(&mut self, params: MovementParams) {
        self.params = MovementParams { kinematics: self.cfg.kinematics, table: self.cfg.table, ..params };
    }

    pub fn busy(&self) -> ParticipantSet {
        *self.busy.lock().expect("busy lock")
    }

    pub fn stand_states(&self) -> Vec<StandState> {
        let busy = self.busy();
        self.slots
            .iter()
            .map(|s| {
                let mut st = s.lock().expect("slot lock").state;
                st.busy = busy.contains(st.stand);
                st
            })
            .collect()
    }

    pub fn stand_state(&self, p: ParticipantId) -> StandState {
        self.stand_states()[p.slot()]
    }

    pub fn tickle_log(&self) -> Vec<TickleRecord> {
        self.tickle_log.lock().expect("tickle log lock").clone()
    }

    /// Executes a program. Busy, lost or obstructed stands refuse the whole
    /// program before any frame is sent. Faults during execution cancel the
    /// remaining commands of the affected stand and send it home; they are
    /// reported, not returned as errors.
    pub fn dispatch(&self, program: &ChoreographyProgram) -> Result<ExecutionReport, GatewayError> {
        program.check(self.params.max_program_ms)?;
        let stands = program.stands();
        {
            let mut busy = self.busy.lock().expect("busy lock");
            for p in stands.iter() {
                if busy.contains(p) {
                    return Err(GatewayError::StandBusy(p));
                }
                let slot = self.slots[p.slot()].lock().expect("slot lock");
                if slot.state.link == LinkState::Lost || slot.link.is_none() {
                    return Err(GatewayError::LinkLost(p));
                }
                if slot.state.obstructed {
                    return Err(GatewayError::Obstructed(p));
                }
            }
            *busy = busy.union(stands);
        }

        let start = Instant::now();
        let mut results: Vec<(Vec<CommandRecord>, Option<CommandRecord>, StandOutcome)> = Vec::new();
        std::thread::scope(|scope| {
            let workers: Vec<_> = stands
                .iter()
                .map(|p| {
                    let cmds = program.commands_for(p);
                    scope.spawn(move || self.run_stand(p, &cmds, start))
                })
                .collect();
            for w in workers {
                results.push(w.join().expect("stand worker panicked"));
            }
        });
        if self.cfg.pacing == Pacing::RealTime {
            sleep_until(start, program.duration_ms());
        }

        {
            let mut busy = self.busy.lock().expect("busy lock");
            *busy = busy.difference(stands);
        }

        let mut commands: Vec<CommandRecord> = Vec::new();
        let mut recoveries = Vec::new();
        let mut outcomes = BTreeMap::new();
        for (p, (records, recovery, outcome)) in stands.iter().zip(results) {
            commands.extend(records);
            recoveries.extend(recovery);
            outcomes.insert(p, outcome);
        }
        commands.sort_by_key(|c| c.index);
        let final_poses = stands.iter().map(|p| (p, self.stand_state(p).pose)).collect();
        let report = ExecutionReport {
            program_id: program.program_id.clone(),
            facilitation: program.facilitation,
            commands,
            recoveries,
            outcomes,
            final_poses,
            elapsed_ms: start.elapsed().as_millis() as u64,
        };
        self.drain_tickles();
        Ok(report)
    }

    fn run_stand(
        &self,
        p: ParticipantId,
        cmds: &[(usize, &StandCommand)],
        start: Instant,
    ) -> (Vec<CommandRecord>, Option<CommandRecord>, StandOutcome) {
        let mut records = Vec::with_capacity(cmds.len());
        let mut outcome = StandOutcome::Completed;
        for &(index, cmd) in cmds {
            if outcome != StandOutcome::Completed {
                records.push(CommandRecord {
                    index: Some(index),
                    stand: p,
                    verb: cmd.verb.name().to_string(),
                    seq: None,
                    status: CommandStatus::Cancelled,
                    attempts: 0,
                    latency_us: 0,
                    pose: None,
                });
                continue;
            }
            if self.cfg.pacing == Pacing::RealTime {
                sleep_until(start, cmd.start_offset_ms);
            }
            let sent = self.send(p, &cmd.verb);
            let record = record_of(Some(index), p, &cmd.verb, &sent);
            outcome = match record.status {
                CommandStatus::Ok => StandOutcome::Completed,
                CommandStatus::Obstructed => StandOutcome::Obstructed,
                CommandStatus::Error => StandOutcome::Error,
                CommandStatus::Lost | CommandStatus::Cancelled => StandOutcome::LinkLost,
            };
            records.push(record);
        }
        let recovery = (outcome != StandOutcome::Completed).then(|| {
            log::warn!("stand {p}: {outcome:?}; sending it home");
            let sent = self.send(p, &StandVerb::ReturnHome);
            record_of(None, p, &StandVerb::ReturnHome, &sent)
        });
        (records, recovery, outcome)
    }

    /// Sends one command with retries, keeping per-stand ordering.
    fn send(&self, p: ParticipantId, verb: &StandVerb) -> Sent {
        let mut slot = self.slots[p.slot()].lock().expect("slot lock");
        let seq = slot.next_seq;
        slot.next_seq += 1;
        let frame = CommandFrame::new(seq, p, verb);
        let timeout = self.cfg.ack_timeout();
        let started = Instant::now();
        let mut attempts = 0;
        let mut result = Err(LinkError::Disconnected("no link".into()));
        if let Some(link) = slot.link.as_mut() {
            for _ in 0..=self.cfg.retries {
                attempts += 1;
                result = link.exchange(&frame, timeout);
                match &result {
                    Ok(_) | Err(LinkError::Disconnected(_)) => break,
                    Err(LinkError::Timeout(_)) => log::debug!("stand {p} seq {seq}: no ack (attempt {attempts})"),
                }
            }
        }
        match &result {
            Ok(ack) => {
                slot.state.pose = ack.pose;
                slot.state.last_seq = Some(seq);
                slot.state.link = LinkState::Connected;
                match ack.status {
                    AckStatus::Obstructed => slot.state.obstructed = true,
                    AckStatus::Ok if *verb == StandVerb::ReturnHome => slot.state.obstructed = false,
                    _ => {}
                }
            }
            Err(e) => {
                log::warn!("stand {p}: link lost ({e})");
                slot.state.link = LinkState::Lost;
            }
        }
        Sent { seq, attempts, latency: started.elapsed(), result }
    }

    /// Operator's one-off command, bypassing the planner. Respects the busy
    /// flag unless `force` is set.
    pub fn direct_command(&self, p: ParticipantId, verb: &StandVerb, force: bool) -> Result<Ack, GatewayError> {
        verb.validate().map_err(GatewayError::InvalidCommand)?;
        if !force && self.busy().contains(p) {
            return Err(GatewayError::StandBusy(p));
        }
        if self.stand_state(p).link == LinkState::Lost {
            return Err(GatewayError::LinkLost(p));
        }
        match self.send(p, verb).result {
            Ok(ack) => Ok(ack),
            Err(_) => Err(GatewayError::LinkLost(p)),
        }
    }

    /// Blinks the receiver's stand, or queues the tickle while it is busy.
    pub fn tickle(&self, from: ParticipantId, to: ParticipantId) -> Result<TickleOutcome, GatewayError> {
        if from == to {
            return Err(GatewayError::SelfTickle(from));
        }
        if self.stand_state(to).link == LinkState::Lost {
            return Err(GatewayError::LinkLost(to));
        }
        let program = compile(FacilitationType::ConnectionTickle, &[from, to], &self.params, ParticipantSet::EMPTY)?;
        match self.dispatch(&program) {
            Ok(report) => {
                self.log_tickle(from, to, false, true);
                Ok(TickleOutcome::Delivered { report })
            }
            Err(GatewayError::StandBusy(_)) => {
                self.queued_tickles.lock().expect("queue lock").push((from, to));
                self.log_tickle(from, to, true, false);
                Ok(TickleOutcome::Queued)
            }
            Err(e) => Err(e),
        }
    }

    fn log_tickle(&self, from: ParticipantId, to: ParticipantId, queued: bool, delivered: bool) {
        self.tickle_log.lock().expect("tickle log lock").push(TickleRecord { from, to, queued, delivered });
    }

    /// Runs queued tickles whose receiver is free again.
    fn drain_tickles(&self) {
        loop {
            let busy = self.busy();
            let next = {
                let mut q = self.queued_tickles.lock().expect("queue lock");
                q.iter().position(|(_, to)| !busy.contains(*to)).map(|i| q.remove(i))
            };
            let Some((from, to)) = next else { return };
            let delivered = compile(FacilitationType::ConnectionTickle, &[from, to], &self.params, ParticipantSet::EMPTY)
                .ok()
                .and_then(|prog| self.dispatch(&prog).ok())
                .is_some_and(|r| r.all_ok());
            self.log_tickle(from, to, false, delivered);
        }
    }

    pub fn queued_tickles(&self) -> Vec<(ParticipantId, ParticipantId)> {
        self.queued_tickles.lock().expect("queue lock").clone()
    }
}

fn record_of(index: Option<usize>, p: ParticipantId, verb: &StandVerb, sent: &Sent) -> CommandRecord {
    let (status, pose) = match &sent.result {
        Ok(ack) => (ack.status.into(), Some(ack.pose)),
        Err(_) => (CommandStatus::Lost, None),
    };
    CommandRecord {
        index,
        stand: p,
        verb: verb.name().to_string(),
        seq: Some(sent.seq),
        status,
        attempts: sent.attempts,
        latency_us: sent.latency.as_micros() as u64,
        pose,
    }
}

fn sleep_until(start: Instant, offset_ms: u64) {
    let due = start + Duration::from_millis(offset_ms);
    let now = Instant::now();
    if due > now {
        std::thread::sleep(due - now);
    }
}
