use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use huddle_core::analytics::{write_report, AnalysisReport, Ratings, SessionLog, SubstageConfig};
use huddle_core::engine::EngineConfig;
use huddle_core::gateway::{Gateway, SimStand, SimStandServer, StandFaults};
use huddle_core::ingest::replay::read_records;
use huddle_core::planner::compile;
use huddle_core::scenario::{generate, run_scenario, Expectation, Replay, ReplayRun, Scenario};
use huddle_core::server::{self, ServerConfig};
use huddle_core::{Engine, FacilitationType, ParticipantId, ParticipantSet, GROUP_SIZE};

#[derive(Parser)]
#[command(name = "huddle", version, about = "Group-discussion dynamics engine and stand gateway")]
struct Cli {
    /// Engine configuration (TOML with [window], [detector], [movement], [gateway]).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the frame-and-event stream of a scenario as NDJSON.
    Generate { scenario: PathBuf },
    /// Replay a scenario (with its operator script) against simulated stands.
    Simulate {
        scenario: PathBuf,
        /// Directory for session, warning, program and feature logs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a scenario and compare against its expectation file.
    CheckScenario {
        scenario: PathBuf,
        /// Defaults to `<scenario>.expect.json` next to the scenario.
        #[arg(long)]
        expect: Option<PathBuf>,
    },
    /// Feed a recorded session log through the engine without operator input.
    Replay {
        log: PathBuf,
        #[arg(long, default_value = "A,B,C,D", value_delimiter = ',')]
        labels: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage, substage, oneness and peer-evaluation tables for a session log.
    Analyze {
        log: PathBuf,
        /// JSON with optional "oneness" {ios, we_scale} and "peer" allocations.
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Compile a facilitation and print the program.
    Compile {
        facilitation: FacilitationType,
        /// Target participants, e.g. P1 P3. Empty means seating order.
        targets: Vec<ParticipantId>,
    },
    /// Run one simulated stand speaking the wire protocol.
    SimStand {
        #[arg(long)]
        stand: ParticipantId,
        #[arg(long, default_value = "127.0.0.1:7001")]
        addr: String,
    },
    /// Run a live session: diarization ingest, operator panel, tickles.
    Serve {
        #[arg(long, default_value = "A,B,C,D", value_delimiter = ',')]
        labels: Vec<String>,
        #[arg(long, default_value = "127.0.0.1:7400")]
        ingest: String,
        #[arg(long, default_value = "127.0.0.1:7401")]
        panel: String,
        /// Operator token; falls back to $HUDDLE_TOKEN.
        #[arg(long, env = "HUDDLE_TOKEN")]
        token: String,
        /// Session log path.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Use in-process simulated stands instead of the configured addresses.
        #[arg(long)]
        simulated: bool,
    },
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    match path {
        Some(p) => EngineConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(EngineConfig::default()),
    }
}

fn write_run(dir: &Path, run: &ReplayRun) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("session.ndjson"), run.session_log())?;
    std::fs::write(dir.join("warnings.ndjson"), run.warning_log())?;
    std::fs::write(dir.join("programs.ndjson"), run.program_log())?;
    std::fs::write(dir.join("features.ndjson"), run.feature_log())?;
    Ok(())
}

fn summarize(run: &ReplayRun) {
    let emitted = run.emitted();
    println!("{} ticks, {} warnings, {} dispatches", run.features.len(), emitted.len(), run.dispatches());
    for w in emitted {
        println!("  t={:<5} {:<26} targets={} recommend={}", w.t, w.kind.name(), w.targets, w.recommended.name());
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Generate { scenario } => {
            let sc = Scenario::load(&scenario)?;
            let mut out = std::io::stdout().lock();
            for r in generate(&sc)? {
                writeln!(out, "{}", r.to_json_line())?;
            }
        }
        Command::Simulate { scenario, out } => {
            let sc = Scenario::load(&scenario)?;
            let run = run_scenario(&sc, &cfg)?;
            summarize(&run);
            if let Some(dir) = out {
                write_run(&dir, &run)?;
            }
        }
        Command::CheckScenario { scenario, expect } => {
            let sc = Scenario::load(&scenario)?;
            let expect_path = expect.unwrap_or_else(|| {
                let stem = scenario.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
                scenario.with_file_name(format!("{stem}.expect.json"))
            });
            let text = std::fs::read_to_string(&expect_path)
                .with_context(|| format!("reading {}", expect_path.display()))?;
            let expectation = Expectation::from_json(&text)?;
            let run = run_scenario(&sc, &cfg)?;
            let problems = expectation.check(&run.emitted(), run.dispatches());
            if problems.is_empty() {
                println!("{}: ok", sc.name);
            } else {
                println!("{}: {} mismatches", sc.name, problems.len());
                for p in problems {
                    println!("  {p}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Replay { log, labels, out } => {
            let records = read_records(BufReader::new(File::open(&log)?))?;
            let mut replay = Replay::new(&labels, cfg, [StandFaults::default(); GROUP_SIZE])?;
            for r in records {
                replay.feed(r)?;
            }
            let run = replay.finish();
            summarize(&run);
            if let Some(dir) = out {
                write_run(&dir, &run)?;
            }
        }
        Command::Analyze { log, ratings, out } => {
            let records = read_records(BufReader::new(File::open(&log)?))?;
            let session = SessionLog::from_records(&records)?;
            let ratings: Option<Ratings> = match ratings {
                Some(p) => Some(serde_json::from_reader(BufReader::new(File::open(&p)?))
                    .with_context(|| format!("parsing {}", p.display()))?),
                None => None,
            };
            let report = AnalysisReport::build(&session, ratings.as_ref(), &cfg.window, &SubstageConfig::default())?;
            for note in &report.notes {
                eprintln!("note: {note}");
            }
            for s in &report.stages {
                println!("{:<20} {:>7.2} min  scr {:.2}", s.stage.name(), s.duration_minutes, s.scr);
            }
            if let Some(o) = &report.oneness {
                println!("group oneness {:.3}", o.group);
            }
            if let Some(p) = &report.peer {
                println!("mean peer-evaluation SD {:.2}", p.mean_sd);
            }
            let files = write_report(&out, &report)?;
            println!("wrote {} to {}", files.join(", "), out.display());
        }
        Command::Compile { facilitation, targets } => {
            let targets = if targets.is_empty() { ParticipantId::ALL.to_vec() } else { targets };
            let mut params = cfg.movement.clone();
            params.kinematics = cfg.gateway.kinematics;
            params.table = cfg.gateway.table;
            let program = compile(facilitation, &targets, &params, ParticipantSet::EMPTY)?;
            writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&program)?)?;
        }
        Command::SimStand { stand, addr } => {
            let sim = SimStand::new(stand, cfg.gateway.kinematics, cfg.gateway.table);
            let server = SimStandServer::spawn(&addr, sim)?;
            log::info!("simulated stand {stand} listening on {}", server.addr());
            println!("stand {stand} on {}", server.addr());
            server.join();
        }
        Command::Serve { labels, ingest, panel, token, log, simulated } => {
            if token.is_empty() {
                bail!("an operator token is required");
            }
            let gateway = if simulated {
                Gateway::simulated(cfg.gateway.clone(), [StandFaults::default(); GROUP_SIZE]).0
            } else {
                Gateway::connect(cfg.gateway.clone())
            };
            let mut gateway = gateway;
            gateway.set_movement_params(cfg.movement.clone());
            let tickle_addr = cfg.gateway.tickle_addr.clone();
            let engine = Engine::new(&labels, cfg)?;
            let handle = server::spawn(
                ServerConfig { ingest_addr: ingest, panel_addr: panel, tickle_addr, token, log_path: log },
                engine,
                Arc::new(gateway),
            )?;
            println!("ingest on {}, panel on ws://{}", handle.ingest_addr, handle.panel_addr);
            if let Some(t) = handle.tickle_addr {
                println!("tickle endpoint on http://{t}/tickle");
            }
            handle.wait();
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
