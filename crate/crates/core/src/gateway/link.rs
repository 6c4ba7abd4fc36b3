use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::sim::SimStand;
use super::wire::{Ack, CommandFrame};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("no ack within {0:?}")]
    Timeout(Duration),
    #[error("link disconnected: {0}")]
    Disconnected(String),
}

/// One request/response channel to a stand.
pub trait StandLink: Send {
    /// Sends a frame and waits for the ack carrying the same seq.
    fn exchange(&mut self, frame: &CommandFrame, timeout: Duration) -> Result<Ack, LinkError>;
}

/// Faults a [`LocalLink`] can inject. Counters are consumed as they fire.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinkFaults {
    /// Lose the next n frames before they reach the stand.
    pub drop_frames: u32,
    /// Deliver the next n frames but lose their acks.
    pub drop_acks: u32,
    /// Deliver every frame twice.
    pub duplicate: bool,
    /// Every exchange fails as if the cable were cut.
    pub severed: bool,
}

/// In-process link to a simulated stand.
#[derive(Clone)]
pub struct LocalLink {
    stand: Arc<Mutex<SimStand>>,
    faults: Arc<Mutex<LinkFaults>>,
}

impl LocalLink {
    pub fn new(stand: Arc<Mutex<SimStand>>) -> Self {
        LocalLink { stand, faults: Arc::new(Mutex::new(LinkFaults::default())) }
    }

    /// Shared handle for changing faults while the link is in use.
    pub fn faults(&self) -> Arc<Mutex<LinkFaults>> {
        self.faults.clone()
    }

    pub fn stand(&self) -> Arc<Mutex<SimStand>> {
        self.stand.clone()
    }
}

impl StandLink for LocalLink {
    fn exchange(&mut self, frame: &CommandFrame, timeout: Duration) -> Result<Ack, LinkError> {
        let mut faults = self.faults.lock().expect("faults lock");
        if faults.severed {
            return Err(LinkError::Disconnected("severed".into()));
        }
        if faults.drop_frames > 0 {
            faults.drop_frames -= 1;
            return Err(LinkError::Timeout(timeout));
        }
        let mut stand = self.stand.lock().expect("stand lock");
        let mut ack = stand.handle(frame);
        if faults.duplicate {
            ack = stand.handle(frame);
        }
        if faults.drop_acks > 0 {
            faults.drop_acks -= 1;
            return Err(LinkError::Timeout(timeout));
        }
        Ok(ack)
    }
}

/// Link to a stand over TCP.
pub struct TcpLink {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
}

impl TcpLink {
    pub fn connect(addr: &str, timeout: Duration) -> std::io::Result<Self> {
        let sock = addr
            .parse()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("{addr}: {e}")))?;
        let stream = TcpStream::connect_timeout(&sock, timeout)?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(TcpLink { writer: stream, reader })
    }
}

impl StandLink for TcpLink {
    fn exchange(&mut self, frame: &CommandFrame, timeout: Duration) -> Result<Ack, LinkError> {
        let disconnected = |e: std::io::Error| LinkError::Disconnected(e.to_string());
        let mut line = frame.to_line();
        line.push('\n');
        self.writer.write_all(line.as_bytes()).map_err(disconnected)?;
        self.writer.flush().map_err(disconnected)?;

        let deadline = Instant::now() + timeout;
        let mut buf = String::new();
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(LinkError::Timeout(timeout));
            }
            self.reader.get_ref().set_read_timeout(Some(left)).map_err(disconnected)?;
            buf.clear();
            match self.reader.read_line(&mut buf) {
                Ok(0) => return Err(LinkError::Disconnected("closed by stand".into())),
                Ok(_) => match Ack::from_line(&buf) {
                    Ok(ack) if ack.seq == frame.seq => return Ok(ack),
                    // A late ack for an earlier attempt; keep waiting.
                    Ok(_) => continue,
                    Err(e) => log::debug!("ignoring malformed ack: {e}"),
                },
                Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                    return Err(LinkError::Timeout(timeout));
                }
                Err(e) => return Err(disconnected(e)),
            }
        }
    }
}
