use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use huddle_core::engine::{Engine, EngineConfig, EngineInput};
use huddle_core::features::{dominance_partition, evaluate_window, WindowConfig};
use huddle_core::gateway::{CommandFrame, Gateway, GatewayConfig, Pacing, StandFaults};
use huddle_core::ingest::{ReplayRecord, SpeechActivityMatrix};
use huddle_core::planner::{compile, MovementParams};
use huddle_core::scenario::{generate, Pattern, Scenario, Segment};
use huddle_core::{FacilitationType, ParticipantId, ParticipantSet, SessionEvent, Stage, StandVerb};

fn session_scenario() -> Scenario {
    Scenario {
        name: "bench".into(),
        seed: 42,
        labels: ["A", "B", "C", "D"].map(String::from).to_vec(),
        segments: vec![
            Segment { duration_s: 600, pattern: Pattern::RoundRobin { turn_len_s: 12, jitter_s: 5, order: ParticipantId::ALL.to_vec() } },
            Segment { duration_s: 300, pattern: Pattern::Monologue { speaker: ParticipantId::ALL[0], share: 0.85 } },
            Segment { duration_s: 200, pattern: Pattern::Silence },
            Segment { duration_s: 2500, pattern: Pattern::RoundRobin { turn_len_s: 9, jitter_s: 6, order: ParticipantId::ALL.to_vec() } },
        ],
        events: vec![SessionEvent::stage(0, Stage::NormingPerforming)],
        operator: vec![],
    }
}

fn bench_window(c: &mut Criterion) {
    let records = generate(&session_scenario()).unwrap();
    let rows = records
        .iter()
        .filter_map(|r| match r {
            ReplayRecord::Frame(f) => Some(f.speaker),
            ReplayRecord::Event(_) => None,
        })
        .collect();
    let matrix = SpeechActivityMatrix::from_speakers(rows);
    let cfg = WindowConfig::default();
    c.bench_function("evaluate_window", |b| b.iter(|| evaluate_window(&matrix, black_box(1800), &cfg).unwrap()));
    c.bench_function("dominance_partition", |b| b.iter(|| dominance_partition(black_box(&[35, 15, 8, 2]))));
}

fn bench_engine(c: &mut Criterion) {
    let records = generate(&session_scenario()).unwrap();
    c.bench_function("engine_one_hour", |b| {
        b.iter_batched(
            || Engine::new(&["A", "B", "C", "D"], EngineConfig::default()).unwrap(),
            |mut engine| {
                for r in &records {
                    let input = match r {
                        ReplayRecord::Frame(f) => EngineInput::Frame(*f),
                        ReplayRecord::Event(e) => EngineInput::Event(e.clone()),
                    };
                    black_box(engine.handle(input).unwrap());
                }
            },
            BatchSize::LargeInput,
        )
    });
}

fn bench_gateway(c: &mut Criterion) {
    let params = MovementParams::default();
    let all = ParticipantId::ALL.to_vec();
    c.bench_function("compile_icebreaking", |b| {
        b.iter(|| compile(FacilitationType::Icebreaking, black_box(&all), &params, ParticipantSet::EMPTY).unwrap())
    });
    let program = compile(FacilitationType::LeaderElection, &all[..1], &params, ParticipantSet::EMPTY).unwrap();
    let cfg = GatewayConfig { pacing: Pacing::Immediate, ..GatewayConfig::default() };
    let (gateway, _) = Gateway::simulated(cfg, [StandFaults::default(); 4]);
    c.bench_function("dispatch_leader_election_sim", |b| b.iter(|| gateway.dispatch(black_box(&program)).unwrap()));
    let frame = CommandFrame::new(7, all[1], &StandVerb::MoveForward { mm: 60.0 });
    let line = frame.to_line();
    c.bench_function("frame_roundtrip", |b| b.iter(|| CommandFrame::from_line(black_box(&line)).unwrap()));
}

criterion_group!(benches, bench_window, bench_engine, bench_gateway);
criterion_main!(benches);
