use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::time::{Duration, Instant};

use huddle_core::engine::{Engine, EngineConfig};
use huddle_core::gateway::{Gateway, GatewayConfig, Pacing, StandFaults};
use huddle_core::server::{spawn, ServerConfig, ServerHandle};
use serde_json::{json, Value};
use tungstenite::{Message, WebSocket};

fn start(log: Option<std::path::PathBuf>) -> ServerHandle {
    let cfg = EngineConfig {
        gateway: GatewayConfig { pacing: Pacing::Immediate, ..GatewayConfig::default() },
        ..EngineConfig::default()
    };
    let (gateway, _) = Gateway::simulated(cfg.gateway.clone(), [StandFaults::default(); 4]);
    let engine = Engine::new(&["A", "B", "C", "D"], cfg).unwrap();
    let server_cfg = ServerConfig {
        ingest_addr: "127.0.0.1:0".into(),
        panel_addr: "127.0.0.1:0".into(),
        tickle_addr: Some("127.0.0.1:0".into()),
        token: "s3cret".into(),
        log_path: log,
    };
    spawn(server_cfg, engine, Arc::new(gateway)).unwrap()
}

fn panel(addr: SocketAddr, token: &str) -> WebSocket<TcpStream> {
    let stream = TcpStream::connect(addr).unwrap();
    let (mut ws, _) = tungstenite::client::client(format!("ws://{addr}/"), stream).unwrap();
    ws.get_ref().set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let hello = json!({"type": "hello", "token": token, "operator": "wiz"});
    ws.send(Message::Text(hello.to_string())).unwrap();
    ws
}

fn next_json(ws: &mut WebSocket<TcpStream>) -> Value {
    loop {
        match ws.read().expect("panel message") {
            Message::Text(t) => return serde_json::from_str(&t).unwrap(),
            Message::Close(_) => panic!("panel closed"),
            _ => {}
        }
    }
}

/// Reads until a message of type `ty` arrives.
fn wait_for(ws: &mut WebSocket<TcpStream>, ty: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(10);
    while Instant::now() < deadline {
        let v = next_json(ws);
        if v["type"] == ty {
            return v;
        }
    }
    panic!("no {ty} message");
}

fn feed(addr: SocketAddr, lines: impl Iterator<Item = String>) -> TcpStream {
    let mut s = TcpStream::connect(addr).unwrap();
    let body: String = lines.map(|l| l + "\n").collect();
    s.write_all(body.as_bytes()).unwrap();
    s
}

fn post(addr: SocketAddr, path: &str, body: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "POST {path} HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len()).unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    let code = resp[9..12].parse().unwrap();
    let body = resp.split("\r\n\r\n").nth(1).unwrap_or("").to_string();
    (code, body)
}

#[test]
fn panel_confirms_a_live_warning() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("session.ndjson");
    let server = start(Some(log.clone()));

    let mut ws = panel(server.panel_addr, "s3cret");
    let snap = wait_for(&mut ws, "snapshot");
    assert_eq!(snap["labels"], json!(["A", "B", "C", "D"]));
    assert_eq!(snap["stands"].as_array().unwrap().len(), 4);

    let mut lines = vec![r#"{"t":0,"event":"stage_mark","stage":"norming_performing"}"#.to_string()];
    lines.extend((0..125).map(|t| format!(r#"{{"t":{t},"speaker":null}}"#)));
    let _src = feed(server.ingest_addr, lines.into_iter());

    let warning = wait_for(&mut ws, "warning");
    assert_eq!(warning["kind"], "all_silent");
    assert_eq!(warning["state"], "open");
    let id = warning["id"].as_str().unwrap().to_string();

    ws.send(Message::Text(json!({"type": "confirm", "id": id}).to_string())).unwrap();
    let dispatch = wait_for(&mut ws, "dispatch");
    assert_eq!(dispatch["program"]["facilitation"], "silence_breaking");
    assert_eq!(dispatch["operator"], "wiz");
    let report = wait_for(&mut ws, "report");
    assert_eq!(report["report"]["program_id"], dispatch["program"]["program_id"]);
    let state = wait_for(&mut ws, "state");
    assert_eq!(state["stands"].as_array().unwrap().len(), 4);

    // Same warning again: the engine refuses and says why.
    ws.send(Message::Text(json!({"type": "confirm", "id": id}).to_string())).unwrap();
    let rejected = wait_for(&mut ws, "rejected");
    assert!(rejected["reason"].as_str().unwrap().contains("already"));

    // Garbage upstream gets an error, not a disconnect.
    ws.send(Message::Text(r#"{"type":"launch"}"#.into())).unwrap();
    assert_eq!(wait_for(&mut ws, "error")["type"], "error");

    drop(ws);
    server.shutdown();
    let journal = std::fs::read_to_string(log).unwrap();
    assert!(journal.contains(r#""type":"operator""#));
    assert!(journal.contains(r#""type":"dispatch""#));
    assert!(journal.lines().any(|l| l == r#"{"t":3,"speaker":null}"#));
}

#[test]
fn one_operator_at_a_time_with_token() {
    let server = start(None);
    let mut bad = panel(server.panel_addr, "nope");
    assert_eq!(next_json(&mut bad)["reason"], "bad operator token");

    let mut first = panel(server.panel_addr, "s3cret");
    wait_for(&mut first, "snapshot");
    let mut second = panel(server.panel_addr, "s3cret");
    assert!(next_json(&mut second)["reason"].as_str().unwrap().contains("another operator"));

    // Once the first leaves, a new panel may attach and rebuild from a snapshot.
    first.close(None).unwrap();
    let _ = first.flush();
    let _ = first.read();
    std::thread::sleep(Duration::from_millis(100));
    let mut third = panel(server.panel_addr, "s3cret");
    wait_for(&mut third, "snapshot");
    server.shutdown();
}

#[test]
fn tickle_endpoint_goes_through_the_engine() {
    let server = start(None);
    let _src = feed(server.ingest_addr, (0..3).map(|t| format!(r#"{{"t":{t},"speaker":"P1"}}"#)));
    std::thread::sleep(Duration::from_millis(100));
    let addr = server.tickle_addr.unwrap();
    assert_eq!(post(addr, "/tickle", r#"{"from":"P1","to":"P3"}"#), (200, r#"{"status":"ok"}"#.into()));
    assert_eq!(post(addr, "/tickle", r#"{"from":"P2","to":"P2"}"#).0, 400);
    assert_eq!(post(addr, "/nope", "{}").0, 404);
    server.shutdown();
}
