//! Simulated stand: dead-reckoned differential drive speaking the wire
//! protocol, with fault injection for tests.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::wire::{Ack, AckStatus, CommandFrame};
use crate::geometry::{Kinematics, Pose, TableGeometry};
use crate::participant::ParticipantId;
use crate::planner::{step_pose, StandVerb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkState {
    Connected,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandState {
    pub stand: ParticipantId,
    pub pose: Pose,
    pub home_pose: Pose,
    pub busy: bool,
    pub obstructed: bool,
    pub link: LinkState,
    pub last_seq: Option<u64>,
}

impl StandState {
    pub fn at_home(stand: ParticipantId, table: &TableGeometry) -> Self {
        let home = table.home_pose(stand);
        StandState {
            stand,
            pose: home,
            home_pose: home,
            busy: false,
            obstructed: false,
            link: LinkState::Connected,
            last_seq: None,
        }
    }

    pub fn is_home(&self, tol_mm: f64, tol_deg: f64) -> bool {
        self.pose.distance_mm(&self.home_pose) <= tol_mm && self.pose.heading_error_deg(&self.home_pose) <= tol_deg
    }
}

/// Advances a stand by `dt_ms` of `verb`. Motion that would leave the table
/// bounds is refused and flags the stand obstructed.
pub fn simulated_stand_step(
    state: &StandState,
    verb: &StandVerb,
    dt_ms: u64,
    kin: &Kinematics,
    table: &TableGeometry,
) -> StandState {
    if dt_ms == 0 {
        return *state;
    }
    let next = step_pose(&state.pose, &state.home_pose, verb, kin, dt_ms);
    if table.contains(&next) {
        StandState { pose: next, ..*state }
    } else {
        StandState { obstructed: true, ..*state }
    }
}

/// Injected faults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StandFaults {
    /// The n-th motion command (1-based) stops part-way and reports obstruction.
    pub obstruct_on_motion: Option<u32>,
    /// Fraction of that command completed before the stop.
    pub obstruct_fraction: f64,
}

/// One executed (state-changing) command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Executed {
    pub seq: u64,
    pub verb: StandVerb,
    pub status: AckStatus,
    pub pose_after: Pose,
}

/// In-process stand model.
#[derive(Debug, Clone)]
pub struct SimStand {
    state: StandState,
    kin: Kinematics,
    table: TableGeometry,
    faults: StandFaults,
    motions: u32,
    last_ack: Option<Ack>,
    history: Vec<Executed>,
    rejected: u32,
}

impl SimStand {
    pub fn new(stand: ParticipantId, kin: Kinematics, table: TableGeometry) -> Self {
        SimStand {
            state: StandState::at_home(stand, &table),
            kin,
            table,
            faults: StandFaults::default(),
            motions: 0,
            last_ack: None,
            history: Vec::new(),
            rejected: 0,
        }
    }

    pub fn with_faults(mut self, faults: StandFaults) -> Self {
        self.faults = faults;
        self
    }

    pub fn state(&self) -> &StandState {
        &self.state
    }

    pub fn history(&self) -> &[Executed] {
        &self.history
    }

    /// Frames refused for stale sequence numbers or bad checksums.
    pub fn rejected(&self) -> u32 {
        self.rejected
    }

    pub fn set_pose(&mut self, pose: Pose) {
        self.state.pose = pose;
    }

    fn ack(&self, seq: u64, status: AckStatus) -> Ack {
        Ack { seq, status, pose: self.state.pose }
    }

    /// Handles one frame. A repeat of the last acknowledged seq returns the
    /// cached ack without moving; an older seq is refused.
    pub fn handle(&mut self, frame: &CommandFrame) -> Ack {
        if frame.verify().is_err() || frame.stand != self.state.stand {
            self.rejected += 1;
            return self.ack(frame.seq, AckStatus::Error);
        }
        if let Some(last) = self.state.last_seq {
            if frame.seq == last {
                if let Some(a) = self.last_ack {
                    return a;
                }
            }
            if frame.seq <= last {
                self.rejected += 1;
                return self.ack(frame.seq, AckStatus::Error);
            }
        }
        let verb = match frame.stand_verb() {
            Ok(v) => v,
            Err(_) => {
                self.rejected += 1;
                return self.ack(frame.seq, AckStatus::Error);
            }
        };
        let status = self.execute(&verb);
        self.state.last_seq = Some(frame.seq);
        let ack = self.ack(frame.seq, status);
        self.last_ack = Some(ack);
        self.history.push(Executed { seq: frame.seq, verb, status, pose_after: self.state.pose });
        ack
    }

    fn execute(&mut self, verb: &StandVerb) -> AckStatus {
        if !verb.is_motion() {
            return AckStatus::Ok;
        }
        if self.state.obstructed && *verb != StandVerb::ReturnHome {
            return AckStatus::Obstructed;
        }
        self.motions += 1;
        let full_ms = full_duration_ms(&self.state, verb, &self.kin);
        if self.faults.obstruct_on_motion == Some(self.motions) {
            let partial = (full_ms as f64 * self.faults.obstruct_fraction.clamp(0.0, 1.0)) as u64;
            self.state = simulated_stand_step(&self.state, verb, partial, &self.kin, &self.table);
            self.state.obstructed = true;
            return AckStatus::Obstructed;
        }
        let next = simulated_stand_step(&self.state, verb, full_ms.max(1), &self.kin, &self.table);
        if next.obstructed && !self.state.obstructed {
            self.state = next;
            return AckStatus::Obstructed;
        }
        self.state = next;
        if *verb == StandVerb::ReturnHome {
            self.state.obstructed = false;
        }
        AckStatus::Ok
    }
}

fn full_duration_ms(state: &StandState, verb: &StandVerb, kin: &Kinematics) -> u64 {
    match verb {
        StandVerb::MoveForward { mm } | StandVerb::MoveBackward { mm } => kin.translate_ms(*mm),
        StandVerb::RotateCw { deg } | StandVerb::RotateCcw { deg } => kin.rotate_ms(*deg),
        StandVerb::ReturnHome => crate::geometry::home_path(&state.pose, &state.home_pose).duration_ms(kin),
        StandVerb::Blink { .. } | StandVerb::ShowScreenHint { .. } => 0,
    }
}

/// Serves a simulated stand over TCP, one client at a time.
pub struct SimStandServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    stand: Arc<Mutex<SimStand>>,
}

impl SimStandServer {
    pub fn spawn(addr: &str, stand: SimStand) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stand = Arc::new(Mutex::new(stand));
        let handle = {
            let stop = stop.clone();
            let stand = stand.clone();
            std::thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    match listener.accept() {
                        Ok((conn, _)) => {
                            if let Err(e) = serve_conn(conn, &stand, &stop) {
                                log::debug!("sim stand connection closed: {e}");
                            }
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            std::thread::sleep(Duration::from_millis(5));
                        }
                        Err(e) => {
                            log::warn!("sim stand accept failed: {e}");
                            break;
                        }
                    }
                }
            })
        };
        Ok(SimStandServer { addr, stop, handle: Some(handle), stand })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stand(&self) -> Arc<Mutex<SimStand>> {
        self.stand.clone()
    }

    /// Blocks until the server thread exits (it runs until `shutdown`).
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for SimStandServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
    }
}

fn serve_conn(conn: TcpStream, stand: &Mutex<SimStand>, stop: &AtomicBool) -> std::io::Result<()> {
    conn.set_nonblocking(false)?;
    conn.set_read_timeout(Some(Duration::from_millis(50)))?;
    let mut writer = conn.try_clone()?;
    let mut reader = BufReader::new(conn);
    let mut line = String::new();
    while !stop.load(Ordering::Relaxed) {
        match reader.read_line(&mut line) {
            Ok(0) => return Ok(()),
            Ok(_) => {
                if !line.trim().is_empty() {
                    let reply = match CommandFrame::from_line(&line) {
                        Ok(frame) => stand.lock().expect("stand lock").handle(&frame).to_line(),
                        Err(e) => {
                            log::debug!("sim stand dropped malformed line: {e}");
                            line.clear();
                            continue;
                        }
                    };
                    writer.write_all(reply.as_bytes())?;
                    writer.write_all(b"\n")?;
                    writer.flush()?;
                }
                line.clear();
            }
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
