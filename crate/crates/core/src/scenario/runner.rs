use serde::{Deserialize, Serialize};

use super::{generate, OperatorStep, Scenario, ScenarioError};
use crate::detector::{CircumstanceWarning, WarningKind, WarningState};
use crate::engine::{execute, Engine, EngineConfig, EngineInput, EngineOutput, Execution, OperatorAction};
use crate::features::FeatureDump;
use crate::gateway::{Gateway, Pacing, SimHandles, StandFaults};
use crate::ingest::ReplayRecord;
use crate::participant::{ParticipantId, GROUP_SIZE};
use crate::planner::{FacilitationType, StandVerb};

/// Scripted operator input. Warnings may be named by id or by kind, in
/// which case the most recent open warning of that kind is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScriptAction {
    Confirm {
        #[serde(default)]
        id: Option<String>,
        #[serde(default)]
        kind: Option<WarningKind>,
        #[serde(default)]
        targets: Option<Vec<ParticipantId>>,
    },
    Dismiss {
        #[serde(default)]
        id: Option<String>,
        #[serde(default)]
        kind: Option<WarningKind>,
    },
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
    Tickle { from: ParticipantId, to: ParticipantId },
}

/// Everything a replay produced, with wall-clock timing stripped.
#[derive(Debug, Clone, Default)]
pub struct ReplayRun {
    pub records: Vec<ReplayRecord>,
    pub features: Vec<FeatureDump>,
    /// Warning transitions in emission order.
    pub warnings: Vec<CircumstanceWarning>,
    pub outputs: Vec<EngineOutput>,
    pub executions: Vec<Execution>,
    /// Session log: input records interleaved with journal lines.
    pub log: Vec<String>,
    /// Frames the simulated stands received.
    pub frames_sent: usize,
}

impl ReplayRun {
    /// First appearance of each warning.
    pub fn emitted(&self) -> Vec<CircumstanceWarning> {
        let mut seen = std::collections::BTreeSet::new();
        self.warnings.iter().filter(|w| seen.insert(w.id.clone())).cloned().collect()
    }

    pub fn dispatches(&self) -> usize {
        self.outputs.iter().filter(|o| matches!(o, EngineOutput::Dispatch { .. })).count()
    }

    pub fn warning_log(&self) -> String {
        ndjson(self.warnings.iter())
    }

    /// Dispatched programs and their execution reports.
    pub fn program_log(&self) -> String {
        let dispatches = self.outputs.iter().filter(|o| matches!(o, EngineOutput::Dispatch { .. }));
        let mut s = ndjson(dispatches);
        s.push_str(&ndjson(self.executions.iter()));
        s
    }

    pub fn session_log(&self) -> String {
        self.log.iter().map(|l| format!("{l}\n")).collect()
    }

    pub fn feature_log(&self) -> String {
        ndjson(self.features.iter())
    }
}

fn ndjson<'a, T: Serialize + 'a>(items: impl Iterator<Item = &'a T>) -> String {
    items.map(|i| serde_json::to_string(i).expect("journal records serialize") + "\n").collect()
}

/// Engine wired to simulated stands, stepping as fast as it is fed.
pub struct Replay {
    engine: Engine,
    gateway: Gateway,
    handles: SimHandles,
    run: ReplayRun,
}

impl Replay {
    pub fn new(labels: &[String], cfg: EngineConfig, faults: [StandFaults; GROUP_SIZE]) -> Result<Self, ScenarioError> {
        let mut gw_cfg = cfg.gateway.clone();
        gw_cfg.pacing = Pacing::Immediate;
        let (mut gateway, handles) = Gateway::simulated(gw_cfg, faults);
        gateway.set_movement_params(cfg.movement.clone());
        let engine = Engine::new(labels, cfg).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(Replay { engine, gateway, handles, run: ReplayRun::default() })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn handles(&self) -> &SimHandles {
        &self.handles
    }

    pub fn feed(&mut self, record: ReplayRecord) -> Result<(), ScenarioError> {
        self.run.log.push(record.to_json_line());
        let input = match &record {
            ReplayRecord::Frame(f) => EngineInput::Frame(*f),
            ReplayRecord::Event(e) => EngineInput::Event(e.clone()),
        };
        self.run.records.push(record);
        self.apply(input)
    }

    pub fn operator(&mut self, step: &OperatorStep) -> Result<(), ScenarioError> {
        let input = match &step.action {
            ScriptAction::Confirm { id, kind, targets } => match self.resolve(id, kind) {
                Ok(id) => self.op(step, OperatorAction::Confirm { id, targets: targets.clone() }),
                Err(reason) => return self.reject(step, "confirm", reason),
            },
            ScriptAction::Dismiss { id, kind } => match self.resolve(id, kind) {
                Ok(id) => self.op(step, OperatorAction::Dismiss { id }),
                Err(reason) => return self.reject(step, "dismiss", reason),
            },
            ScriptAction::Manual { facilitation, targets } => {
                self.op(step, OperatorAction::Manual { facilitation: *facilitation, targets: targets.clone() })
            }
            ScriptAction::Direct { stand, verb, force } => {
                self.op(step, OperatorAction::Direct { stand: *stand, verb: verb.clone(), force: *force })
            }
            ScriptAction::Tickle { from, to } => EngineInput::Tickle { from: *from, to: *to },
        };
        self.apply(input)
    }

    pub fn finish(mut self) -> ReplayRun {
        self.run.frames_sent = self.handles.stands.iter().map(|s| s.lock().expect("stand lock").history().len()).sum();
        self.run
    }

    fn op(&self, step: &OperatorStep, action: OperatorAction) -> EngineInput {
        EngineInput::Operator { operator: step.operator.clone(), action }
    }

    fn resolve(&self, id: &Option<String>, kind: &Option<WarningKind>) -> Result<String, String> {
        if let Some(id) = id {
            return Ok(id.clone());
        }
        let kind = kind.ok_or("step names neither a warning id nor a kind")?;
        self.engine
            .detector()
            .warnings()
            .iter()
            .rev()
            .find(|w| w.kind == kind && w.state == WarningState::Open)
            .map(|w| w.id.clone())
            .ok_or_else(|| format!("no open {kind} warning"))
    }

    fn reject(&mut self, step: &OperatorStep, action: &str, reason: String) -> Result<(), ScenarioError> {
        let out = EngineOutput::Rejected {
            t: self.engine.session().clock().unwrap_or(0),
            operator: step.operator.clone(),
            action: action.into(),
            reason,
        };
        self.record(out);
        Ok(())
    }

    fn apply(&mut self, input: EngineInput) -> Result<(), ScenarioError> {
        let outputs = self.engine.handle(input).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        for out in outputs {
            self.record(out);
        }
        Ok(())
    }

    fn record(&mut self, out: EngineOutput) {
        match &out {
            EngineOutput::Tick(tick) => {
                self.run.features.push(tick.features.clone());
                self.run.outputs.push(out);
                return;
            }
            EngineOutput::Warning(w) => self.run.warnings.push(w.clone()),
            _ => {}
        }
        self.run.log.push(serde_json::to_string(&out).expect("outputs serialize"));
        if let Some(exec) = execute(&self.gateway, &out) {
            let exec = exec.without_timing();
            self.run.log.push(serde_json::to_string(&exec).expect("executions serialize"));
            self.run.executions.push(exec);
        }
        self.run.outputs.push(out);
    }
}

/// Generates the scenario and replays it, operator script included.
pub fn run_scenario(scenario: &Scenario, cfg: &EngineConfig) -> Result<ReplayRun, ScenarioError> {
    run_scenario_with_faults(scenario, cfg, [StandFaults::default(); GROUP_SIZE])
}

pub fn run_scenario_with_faults(
    scenario: &Scenario,
    cfg: &EngineConfig,
    faults: [StandFaults; GROUP_SIZE],
) -> Result<ReplayRun, ScenarioError> {
    let records = generate(scenario)?;
    let mut replay = Replay::new(&scenario.labels, cfg.clone(), faults)?;
    let mut steps = scenario.operator.iter().peekable();
    for record in records {
        let frame_t = match &record {
            ReplayRecord::Frame(f) => Some(f.t),
            ReplayRecord::Event(_) => None,
        };
        replay.feed(record)?;
        if let Some(t) = frame_t {
            while let Some(step) = steps.next_if(|s| s.t <= t) {
                replay.operator(step)?;
            }
        }
    }
    Ok(replay.finish())
}
