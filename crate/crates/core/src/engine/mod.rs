//! Single-writer session engine.
//!
//! Frames, lifecycle events, operator actions and tickles go in one at a
//! time; ticks, warnings and dispatch requests come out. The engine is pure:
//! it never talks to stands itself. Whoever drives it executes `Dispatch`,
//! `Direct` and `Tickle` outputs against a gateway.

mod exec;

pub use exec::{execute, Execution};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{CircumstanceWarning, Detector, DetectorConfig, DetectorError, TickInput};
use crate::features::{evaluate_window, FeatureDump, WindowConfig};
use crate::gateway::GatewayConfig;
use crate::ingest::{register_session, DiarizationFrame, EventKind, IngestError, Session, SessionEvent};
use crate::participant::{ParticipantId, ParticipantSet, Stage, GROUP_SIZE};
use crate::planner::{compile, ChoreographyProgram, FacilitationType, MovementParams, StandVerb, TargetArity};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

/// All tunables, loadable from one TOML file with `[window]`, `[detector]`,
/// `[movement]` and `[gateway]` tables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub window: WindowConfig,
    pub detector: DetectorConfig,
    pub movement: MovementParams,
    pub gateway: GatewayConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl EngineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: EngineConfig = toml::from_str(s)?;
        cfg.detector.validate().map_err(ConfigError::Invalid)?;
        if cfg.window.window_s == 0 {
            return Err(ConfigError::Invalid("window_s must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }
}

/// Upstream panel messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OperatorAction {
    /// Accept a warning. `targets` overrides the recommended program targets.
    Confirm {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        targets: Option<Vec<ParticipantId>>,
    },
    Dismiss { id: String },
    /// Fire a facilitation without a warning. Empty targets on whole-group
    /// types mean seating order.
    Manual {
        facilitation: FacilitationType,
        #[serde(default)]
        targets: Vec<ParticipantId>,
    },
    Direct {
        stand: ParticipantId,
        #[serde(flatten)]
        verb: StandVerb,
        #[serde(default)]
        force: bool,
    },
}

impl OperatorAction {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorAction::Confirm { .. } => "confirm",
            OperatorAction::Dismiss { .. } => "dismiss",
            OperatorAction::Manual { .. } => "manual",
            OperatorAction::Direct { .. } => "direct",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineInput {
    Frame(DiarizationFrame),
    Event(SessionEvent),
    Operator { operator: String, action: OperatorAction },
    Tickle { from: ParticipantId, to: ParticipantId },
}

/// Why a program was dispatched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DispatchOrigin {
    Warning { id: String },
    /// A confirmed warning whose targets the operator changed.
    ManualVariant { id: String },
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickMessage {
    pub stage: Option<Stage>,
    pub silence_run_s: u32,
    pub busy: ParticipantSet,
    #[serde(flatten)]
    pub features: FeatureDump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EngineOutput {
    Tick(TickMessage),
    Warning(CircumstanceWarning),
    /// Journal echo of an operator action.
    Operator { t: u32, operator: String, action: OperatorAction },
    Dispatch { t: u32, operator: String, origin: DispatchOrigin, program: ChoreographyProgram },
    Direct { t: u32, operator: String, stand: ParticipantId, verb: StandVerb, force: bool },
    Tickle { t: u32, from: ParticipantId, to: ParticipantId },
    Rejected { t: u32, operator: String, action: String, reason: String },
}

/// Full state for a panel that has just (re)connected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: Option<u32>,
    pub labels: Vec<String>,
    pub stage: Option<Stage>,
    pub busy: ParticipantSet,
    pub last_tick: Option<TickMessage>,
    pub warnings: Vec<CircumstanceWarning>,
}

struct Running {
    warning: Option<String>,
    stands: ParticipantSet,
    until: u32,
}

pub struct Engine {
    cfg: EngineConfig,
    session: Session,
    detector: Detector,
    silence_run: u32,
    busy_until: [u32; GROUP_SIZE],
    running: Vec<Running>,
    last_tick: Option<TickMessage>,
}

fn secs_ceil(ms: u64) -> u32 {
    ms.div_ceil(1000) as u32
}

impl Engine {
    /// The gateway's table and kinematics override those in `movement`, so
    /// compiled programs match what the stands will execute.
    pub fn new<S: AsRef<str>>(labels: &[S], mut cfg: EngineConfig) -> Result<Self, EngineError> {
        cfg.movement.kinematics = cfg.gateway.kinematics;
        cfg.movement.table = cfg.gateway.table;
        let session = register_session(labels)?;
        Ok(Engine {
            detector: Detector::new(cfg.detector.clone()),
            cfg,
            session,
            silence_run: 0,
            busy_until: [0; GROUP_SIZE],
            running: Vec::new(),
            last_tick: None,
        })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    /// Current session second for stamping operator actions.
    fn now(&self) -> u32 {
        self.session.clock().unwrap_or(0)
    }

    /// Stands the engine believes are running a program at second `t`.
    pub fn busy_at(&self, t: u32) -> ParticipantSet {
        ParticipantId::ALL.into_iter().filter(|p| self.busy_until[p.slot()] > t).collect()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            t: self.session.clock(),
            labels: self.session.labels().to_vec(),
            stage: self.session.stage().map(|(s, _)| s),
            busy: self.busy_at(self.now()),
            last_tick: self.last_tick.clone(),
            warnings: self.detector.warnings().to_vec(),
        }
    }

    pub fn handle(&mut self, input: EngineInput) -> Result<Vec<EngineOutput>, EngineError> {
        match input {
            EngineInput::Frame(f) => self.on_frame(f),
            EngineInput::Event(e) => self.on_event(e),
            EngineInput::Operator { operator, action } => Ok(self.on_operator(operator, action)),
            EngineInput::Tickle { from, to } => Ok(self.on_tickle(from, to)),
        }
    }

    fn on_frame(&mut self, frame: DiarizationFrame) -> Result<Vec<EngineOutput>, EngineError> {
        self.session.push_frame(frame)?;
        let t = frame.t;
        self.silence_run = if frame.speaker.is_some() { 0 } else { self.silence_run + 1 };

        let (done, still): (Vec<_>, Vec<_>) = std::mem::take(&mut self.running).into_iter().partition(|r| r.until <= t);
        self.running = still;
        for r in done {
            if let Some(id) = r.warning {
                self.detector.on_program_completed(&id, t);
            }
        }

        let features = evaluate_window(self.session.matrix(), t, &self.cfg.window).expect("frame was just appended");
        let busy = self.busy_at(t);
        let stage = self.session.stage();
        let tick = TickMessage {
            stage: stage.map(|(s, _)| s),
            silence_run_s: self.silence_run,
            busy,
            features: features.dump(),
        };
        self.last_tick = Some(tick.clone());
        let mut out = vec![EngineOutput::Tick(tick)];
        let changed = self.detector.tick(TickInput {
            features: &features,
            matrix: self.session.matrix(),
            stage,
            silence_run_s: self.silence_run,
            busy,
        })?;
        out.extend(changed.into_iter().map(EngineOutput::Warning));
        Ok(out)
    }

    fn on_event(&mut self, event: SessionEvent) -> Result<Vec<EngineOutput>, EngineError> {
        let before = self.session.stage();
        self.session.push_event(event.clone())?;
        if matches!(event.kind, EventKind::StageMark { .. }) && self.session.stage() != before {
            self.silence_run = 0;
        }
        Ok(Vec::new())
    }

    fn on_operator(&mut self, operator: String, action: OperatorAction) -> Vec<EngineOutput> {
        let t = self.now();
        let mut out = vec![EngineOutput::Operator { t, operator: operator.clone(), action: action.clone() }];
        let reject = |reason: String| EngineOutput::Rejected {
            t,
            operator: operator.clone(),
            action: action.name().to_string(),
            reason,
        };
        match &action {
            OperatorAction::Confirm { id, targets } => {
                let Some(w) = self.detector.get(id).cloned() else {
                    out.push(reject(DetectorError::UnknownWarning(id.clone()).to_string()));
                    return out;
                };
                if w.state.is_terminal() {
                    out.push(reject(DetectorError::AlreadyTerminal { id: id.clone(), state: w.state }.to_string()));
                    return out;
                }
                let chosen = targets.clone().unwrap_or_else(|| w.recommended_targets.clone());
                let program = match compile(w.recommended, &chosen, &self.cfg.movement, self.busy_at(t)) {
                    Ok(p) => p,
                    Err(e) => {
                        out.push(reject(e.to_string()));
                        return out;
                    }
                };
                let confirmed = self.detector.confirm(id, t).expect("checked open above");
                let origin = if chosen == w.recommended_targets {
                    DispatchOrigin::Warning { id: id.clone() }
                } else {
                    DispatchOrigin::ManualVariant { id: id.clone() }
                };
                out.push(EngineOutput::Warning(confirmed));
                out.push(self.start_program(t, operator.clone(), origin, Some(id.clone()), program));
            }
            OperatorAction::Dismiss { id } => match self.detector.dismiss(id, t) {
                Ok(w) => out.push(EngineOutput::Warning(w)),
                Err(e) => out.push(reject(e.to_string())),
            },
            OperatorAction::Manual { facilitation, targets } => {
                let targets = if targets.is_empty() && facilitation.arity() == TargetArity::All {
                    ParticipantId::ALL.to_vec()
                } else {
                    targets.clone()
                };
                match compile(*facilitation, &targets, &self.cfg.movement, self.busy_at(t)) {
                    Ok(program) => out.push(self.start_program(t, operator.clone(), DispatchOrigin::Manual, None, program)),
                    Err(e) => out.push(reject(e.to_string())),
                }
            }
            OperatorAction::Direct { stand, verb, force } => {
                if let Err(e) = verb.validate() {
                    out.push(reject(e));
                } else if !force && self.busy_at(t).contains(*stand) {
                    out.push(reject(format!("stand {stand} is busy")));
                } else {
                    out.push(EngineOutput::Direct { t, operator: operator.clone(), stand: *stand, verb: verb.clone(), force: *force });
                }
            }
        }
        out
    }

    fn start_program(
        &mut self,
        t: u32,
        operator: String,
        origin: DispatchOrigin,
        warning: Option<String>,
        program: ChoreographyProgram,
    ) -> EngineOutput {
        let stands = program.stands();
        let until = t + secs_ceil(program.duration_ms());
        for p in stands.iter() {
            self.busy_until[p.slot()] = self.busy_until[p.slot()].max(until);
        }
        self.running.push(Running { warning, stands, until });
        self.detector.on_program_dispatched(program.facilitation);
        EngineOutput::Dispatch { t, operator, origin, program }
    }

    fn on_tickle(&mut self, from: ParticipantId, to: ParticipantId) -> Vec<EngineOutput> {
        let t = self.now();
        if from == to {
            return vec![EngineOutput::Rejected {
                t,
                operator: from.to_string(),
                action: "tickle".into(),
                reason: format!("{from} cannot tickle themselves"),
            }];
        }
        if let Ok(p) = compile(FacilitationType::ConnectionTickle, &[from, to], &self.cfg.movement, ParticipantSet::EMPTY) {
            // A busy receiver runs the tickle after its current program.
            let start = self.busy_until[to.slot()].max(t);
            self.busy_until[to.slot()] = start + secs_ceil(p.duration_ms());
        }
        vec![EngineOutput::Tickle { t, from, to }]
    }

    /// Stands touched by programs still running.
    pub fn running_stands(&self) -> ParticipantSet {
        self.running.iter().fold(ParticipantSet::EMPTY, |acc, r| acc.union(r.stands))
    }
}
