use std::path::PathBuf;
use std::process::{Command, Output};

fn huddle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_huddle")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/scenarios")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn every_fixture_matches_its_expectation() {
    for entry in std::fs::read_dir(fixtures()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.to_str().unwrap();
        if name.ends_with(".expect.json") || !name.ends_with(".json") {
            continue;
        }
        let out = huddle(&["check-scenario", name]);
        assert!(out.status.success(), "{name}: {}", stdout(&out));
        assert!(stdout(&out).ends_with(": ok\n"));
    }
}

#[test]
fn wrong_expectation_fails() {
    let dir = tempfile::tempdir().unwrap();
    let expect = dir.path().join("e.json");
    std::fs::write(&expect, r#"{"warnings":[],"dispatches":0}"#).unwrap();
    let sc = fixtures().join("silence_norming.json");
    let out = huddle(&["check-scenario", sc.to_str().unwrap(), "--expect", expect.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stdout(&out).contains("unexpected all_silent"));
}

#[test]
fn simulate_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let sc = fixtures().join("full_session.json");
    let out = huddle(&["simulate", sc.to_str().unwrap(), "--out", run_dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("700 ticks, 0 warnings, 3 dispatches"));
    for f in ["session.ndjson", "warnings.ndjson", "programs.ndjson", "features.ndjson"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }

    let ratings = dir.path().join("ratings.json");
    let row = "[null,7,7,7]";
    let m = format!("[{row},[7,null,7,7],[7,7,null,7],[7,7,7,null]]");
    std::fs::write(&ratings, format!(r#"{{"oneness":{{"ios":{m},"we_scale":{m}}},"peer":[[100,0,0,0],[25,25,25,25]]}}"#))
        .unwrap();
    let report = dir.path().join("report");
    let out = huddle(&[
        "analyze",
        run_dir.join("session.ndjson").to_str().unwrap(),
        "--ratings",
        ratings.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("forming                 1.67 min  scr 0.80"), "{text}");
    assert!(text.contains("group oneness 7.000"));
    assert!(text.contains("mean peer-evaluation SD 21.65"));
    let stages = std::fs::read_to_string(report.join("stage_report.csv")).unwrap();
    assert!(stages.starts_with("stage,start_s,end_s,voiced_s,duration_min,scr\nforming,0,100,80,1.67,0.80\n"));
    let peer = std::fs::read_to_string(report.join("peer_sd.csv")).unwrap();
    assert!(peer.contains("0,43.30"));

    // The session log replays to the same warnings without operator input.
    let out = huddle(&["replay", run_dir.join("session.ndjson").to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("700 ticks, 0 warnings, 0 dispatches"));
}

#[test]
fn compile_checks_arity() {
    let out = huddle(&["compile", "farewell"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains(r#""program_id": "farewell-P1P2P3P4-"#));
    let out = huddle(&["compile", "conflict_solving", "P1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("got [P1]"));
}

#[test]
fn generate_prints_the_stream() {
    let sc = fixtures().join("dyad_conflict.json");
    let out = huddle(&["generate", sc.to_str().unwrap()]);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 121);
    assert_eq!(lines[0], r#"{"t":0,"event":"stage_mark","stage":"storming"}"#);
    assert_eq!(lines[1], r#"{"t":0,"speaker":"P1"}"#);
}

#[test]
fn example_config_loads() {
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../huddle.example.toml");
    let out = huddle(&["--config", cfg.to_str().unwrap(), "compile", "leader_election", "P2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = huddle(&["--config", "/nonexistent.toml", "compile", "farewell"]);
    assert!(!out.status.success());
}
