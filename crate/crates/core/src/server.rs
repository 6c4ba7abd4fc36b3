//! Live session server.
//!
//! One engine thread owns the [`Engine`]; everything else talks to it over a
//! channel. Diarization arrives as NDJSON on a TCP port, the operator panel
//! connects over WebSocket, and the tickle endpoint is plain HTTP. Programs
//! run on worker threads so a long choreography never stalls ingest.
//!
//! Panel protocol: the client first sends
//! `{"type":"hello","token":"...","operator":"name"}` and receives a
//! `snapshot`. After that the server pushes every engine output (`tick`,
//! `warning`, `dispatch`, `rejected`, ...), execution results (`report`,
//! `direct_ack`, `tickle_result`, `failed`) followed by a `state` message
//! with all stand poses, and accepts `confirm`, `dismiss`, `manual` and
//! `direct` messages. Only one panel may be attached
//! at a time.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use tungstenite::{Message, WebSocket};

use crate::engine::{execute, Engine, EngineInput, EngineOutput, Execution, OperatorAction};
use crate::gateway::http::{TickleHandler, TickleServer};
use crate::gateway::{Gateway, GatewayError, TickleOutcome};
use crate::ingest::replay::parse_line;
use crate::ingest::ReplayRecord;
use crate::participant::ParticipantId;

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub ingest_addr: String,
    pub panel_addr: String,
    /// `None` disables the tickle endpoint.
    pub tickle_addr: Option<String>,
    /// Shared secret the panel must present.
    pub token: String,
    /// Session log (input records plus journal lines).
    pub log_path: Option<PathBuf>,
}

type TickleReply = Sender<Result<TickleOutcome, GatewayError>>;

enum Msg {
    Input(EngineInput),
    Record(ReplayRecord),
    Tickle { from: ParticipantId, to: ParticipantId, reply: TickleReply },
    Snapshot(Sender<String>),
    Stop,
}

/// Fan-out for journal lines and panel messages.
struct Hub {
    panel: Mutex<Option<Sender<String>>>,
    journal: Mutex<Option<File>>,
}

impl Hub {
    fn to_panel(&self, line: &str) {
        let mut panel = self.panel.lock().expect("panel lock");
        if let Some(tx) = panel.as_ref() {
            if tx.send(line.to_string()).is_err() {
                *panel = None;
            }
        }
    }

    fn journal(&self, line: &str) {
        if let Some(f) = self.journal.lock().expect("journal lock").as_mut() {
            if let Err(e) = writeln!(f, "{line}") {
                log::error!("session log write failed: {e}");
            }
        }
    }

    fn publish(&self, line: &str) {
        self.journal(line);
        self.to_panel(line);
    }
}

fn state_message(gateway: &Gateway, t: Option<u32>) -> String {
    json!({ "type": "state", "t": t, "stands": gateway.stand_states() }).to_string()
}

pub struct ServerHandle {
    pub ingest_addr: SocketAddr,
    pub panel_addr: SocketAddr,
    pub tickle_addr: Option<SocketAddr>,
    stop: Arc<AtomicBool>,
    tx: Sender<Msg>,
    threads: Vec<JoinHandle<()>>,
    tickle: Option<TickleServer>,
}

impl ServerHandle {
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.tx.send(Msg::Stop);
        if let Some(t) = self.tickle.take() {
            t.shutdown();
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Blocks until the engine thread exits (session end or shutdown).
    pub fn wait(mut self) {
        if let Some(engine) = self.threads.pop() {
            let _ = engine.join();
        }
        self.shutdown();
    }
}

pub fn spawn(cfg: ServerConfig, engine: Engine, gateway: Arc<Gateway>) -> std::io::Result<ServerHandle> {
    let journal = match &cfg.log_path {
        Some(p) => Some(File::create(p)?),
        None => None,
    };
    let hub = Arc::new(Hub { panel: Mutex::new(None), journal: Mutex::new(journal) });
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();

    let ingest = TcpListener::bind(&cfg.ingest_addr)?;
    ingest.set_nonblocking(true)?;
    let panel = TcpListener::bind(&cfg.panel_addr)?;
    panel.set_nonblocking(true)?;
    let ingest_addr = ingest.local_addr()?;
    let panel_addr = panel.local_addr()?;

    let tickle = match &cfg.tickle_addr {
        Some(addr) => {
            let tx = Mutex::new(tx.clone());
            let handler: TickleHandler = Arc::new(move |from, to| {
                let (reply, wait) = mpsc::channel();
                let sent = tx.lock().expect("tickle sender lock").send(Msg::Tickle { from, to, reply });
                sent.map_err(|_| GatewayError::InvalidCommand("engine stopped".into()))?;
                wait.recv().map_err(|_| GatewayError::InvalidCommand("engine stopped".into()))?
            });
            Some(TickleServer::spawn(addr, handler)?)
        }
        None => None,
    };
    let tickle_addr = tickle.as_ref().map(|t| t.addr());

    let mut threads = Vec::new();
    {
        let (tx, stop) = (tx.clone(), stop.clone());
        threads.push(std::thread::spawn(move || accept_ingest(ingest, tx, stop)));
    }
    {
        let (tx, stop, hub, token) = (tx.clone(), stop.clone(), hub.clone(), cfg.token.clone());
        threads.push(std::thread::spawn(move || accept_panels(panel, tx, hub, token, stop)));
    }
    // Engine thread last so `wait` can join it alone.
    threads.push(std::thread::spawn(move || engine_loop(engine, gateway, rx, hub)));

    Ok(ServerHandle { ingest_addr, panel_addr, tickle_addr, stop, tx, threads, tickle })
}

fn engine_loop(mut engine: Engine, gateway: Arc<Gateway>, rx: Receiver<Msg>, hub: Arc<Hub>) {
    let mut pending_tickles: Vec<TickleReply> = Vec::new();
    while let Ok(msg) = rx.recv() {
        let mut record_line = None;
        let input = match msg {
            Msg::Stop => break,
            Msg::Snapshot(reply) => {
                let mut snap = serde_json::to_value(engine.snapshot()).expect("snapshot serializes");
                snap["type"] = json!("snapshot");
                snap["stands"] = json!(gateway.stand_states());
                let _ = reply.send(snap.to_string());
                continue;
            }
            Msg::Record(r) => {
                record_line = Some(r.to_json_line());
                match r {
                    ReplayRecord::Frame(f) => EngineInput::Frame(f),
                    ReplayRecord::Event(e) => EngineInput::Event(e),
                }
            }
            Msg::Tickle { from, to, reply } => {
                if from == to {
                    let _ = reply.send(Err(GatewayError::SelfTickle(from)));
                } else {
                    pending_tickles.push(reply);
                }
                EngineInput::Tickle { from, to }
            }
            Msg::Input(i) => i,
        };
        let outputs = match engine.handle(input) {
            Ok(o) => {
                if let Some(line) = record_line {
                    hub.journal(&line);
                }
                o
            }
            Err(e) => {
                log::warn!("input rejected: {e}");
                hub.to_panel(&json!({ "type": "error", "reason": e.to_string() }).to_string());
                continue;
            }
        };
        for out in outputs {
            let line = serde_json::to_string(&out).expect("outputs serialize");
            match &out {
                EngineOutput::Tick(_) => hub.to_panel(&line),
                _ => hub.publish(&line),
            }
            match out {
                EngineOutput::Dispatch { .. } | EngineOutput::Direct { .. } | EngineOutput::Tickle { .. } => {
                    let reply = if matches!(out, EngineOutput::Tickle { .. }) { pending_tickles.pop() } else { None };
                    let (gateway, hub) = (gateway.clone(), hub.clone());
                    let t = engine.session().clock();
                    std::thread::spawn(move || run_output(&gateway, &hub, out, reply, t));
                }
                _ => {}
            }
        }
        if engine.session().state() == crate::ingest::SessionState::Ended {
            log::info!("session ended");
            break;
        }
    }
}

fn run_output(gateway: &Gateway, hub: &Hub, out: EngineOutput, reply: Option<TickleReply>, t: Option<u32>) {
    if let Some(exec) = execute(gateway, &out) {
        if let Some(reply) = reply {
            let _ = reply.send(match &exec {
                Execution::TickleResult { outcome, .. } => Ok(outcome.clone()),
                Execution::Failed { reason, .. } => Err(GatewayError::InvalidCommand(reason.clone())),
                _ => unreachable!("tickles yield tickle results"),
            });
        }
        hub.publish(&serde_json::to_string(&exec).expect("executions serialize"));
        hub.to_panel(&state_message(gateway, t));
    }
}

fn accept_ingest(listener: TcpListener, tx: Sender<Msg>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("diarization source connected from {peer}");
                let (tx, stop) = (tx.clone(), stop.clone());
                std::thread::spawn(move || serve_ingest(stream, tx, stop));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(e) => log::warn!("ingest accept failed: {e}"),
        }
    }
}

fn serve_ingest(stream: TcpStream, tx: Sender<Msg>, stop: Arc<AtomicBool>) {
    if stream.set_nonblocking(false).and_then(|_| stream.set_read_timeout(Some(Duration::from_millis(200)))).is_err() {
        return;
    }
    let Ok(mut writer) = stream.try_clone() else { return };
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    while !stop.load(Ordering::SeqCst) {
        match reader.read_line(&mut line) {
            Ok(0) => return,
            Ok(_) => {
                match parse_line(&line) {
                    Ok(Some(r)) => {
                        if tx.send(Msg::Record(r)).is_err() {
                            return;
                        }
                    }
                    Ok(None) => {}
                    Err(e) => {
                        let _ = writeln!(writer, "{}", json!({ "error": e }));
                    }
                }
                line.clear();
            }
            // Partial lines stay in `line` until the rest arrives.
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
    }
}

#[derive(Deserialize)]
struct Hello {
    #[serde(rename = "type")]
    kind: String,
    token: String,
    operator: String,
}

fn accept_panels(listener: TcpListener, tx: Sender<Msg>, hub: Arc<Hub>, token: String, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("panel connecting from {peer}");
                let (tx, hub, token, stop) = (tx.clone(), hub.clone(), token.clone(), stop.clone());
                std::thread::spawn(move || {
                    if let Err(e) = serve_panel(stream, tx, hub, &token, stop) {
                        log::info!("panel {peer} closed: {e}");
                    }
                });
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(e) => log::warn!("panel accept failed: {e}"),
        }
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut))
}

fn refuse(ws: &mut WebSocket<TcpStream>, reason: &str) -> Result<(), String> {
    let _ = ws.send(Message::Text(json!({ "type": "error", "reason": reason }).to_string()));
    let _ = ws.close(None);
    let _ = ws.flush();
    Err(reason.to_string())
}

fn serve_panel(
    stream: TcpStream,
    tx: Sender<Msg>,
    hub: Arc<Hub>,
    token: &str,
    stop: Arc<AtomicBool>,
) -> Result<(), String> {
    stream.set_nonblocking(false).map_err(|e| e.to_string())?;
    let mut ws = tungstenite::accept(stream).map_err(|e| e.to_string())?;

    let hello = match ws.read().map_err(|e| e.to_string())? {
        Message::Text(t) => serde_json::from_str::<Hello>(&t).ok(),
        _ => None,
    };
    let Some(hello) = hello.filter(|h| h.kind == "hello") else {
        return refuse(&mut ws, "expected a hello message");
    };
    if hello.token != token {
        return refuse(&mut ws, "bad operator token");
    }
    let (out_tx, out_rx) = mpsc::channel::<String>();
    {
        let mut panel = hub.panel.lock().expect("panel lock");
        if panel.as_ref().is_some_and(|p| p.send(String::new()).is_ok()) {
            drop(panel);
            return refuse(&mut ws, "another operator panel is attached");
        }
        *panel = Some(out_tx);
    }
    let result = panel_loop(&mut ws, &hello.operator, &tx, &out_rx, &stop);
    let mut panel = hub.panel.lock().expect("panel lock");
    *panel = None;
    result
}

fn panel_loop(
    ws: &mut WebSocket<TcpStream>,
    operator: &str,
    tx: &Sender<Msg>,
    out_rx: &Receiver<String>,
    stop: &AtomicBool,
) -> Result<(), String> {
    let (snap_tx, snap_rx) = mpsc::channel();
    tx.send(Msg::Snapshot(snap_tx)).map_err(|_| "engine stopped")?;
    let snapshot = snap_rx.recv().map_err(|_| "engine stopped")?;
    ws.send(Message::Text(snapshot)).map_err(|e| e.to_string())?;
    ws.get_ref().set_read_timeout(Some(POLL)).map_err(|e| e.to_string())?;

    while !stop.load(Ordering::SeqCst) {
        while let Ok(line) = out_rx.try_recv() {
            // Empty strings are liveness probes from a competing panel.
            if !line.is_empty() {
                ws.send(Message::Text(line)).map_err(|e| e.to_string())?;
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => match serde_json::from_str::<OperatorAction>(&text) {
                Ok(action) => {
                    let input = EngineInput::Operator { operator: operator.to_string(), action };
                    tx.send(Msg::Input(input)).map_err(|_| "engine stopped")?;
                }
                Err(e) => {
                    let msg = json!({ "type": "error", "reason": format!("bad panel message: {e}") });
                    ws.send(Message::Text(msg.to_string())).map_err(|e| e.to_string())?;
                }
            },
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    let _ = ws.close(None);
    Ok(())
}
