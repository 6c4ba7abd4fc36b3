//! `POST /tickle` endpoint.
//!
//! Request `{"from":"P1","to":"P3"}`; reply `200 {"status":"ok"}` or a 4xx
//! status with `{"error": "..."}`.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Deserialize;
use serde_json::json;

use super::{GatewayError, TickleOutcome};
use crate::participant::ParticipantId;

pub type TickleHandler =
    Arc<dyn Fn(ParticipantId, ParticipantId) -> Result<TickleOutcome, GatewayError> + Send + Sync>;

#[derive(Deserialize)]
struct TickleRequest {
    from: ParticipantId,
    to: ParticipantId,
}

/// Routes one request. Returns the status code and JSON body.
pub fn route(method: &str, path: &str, body: &str, handler: &TickleHandler) -> (u16, String) {
    let error = |code: u16, msg: String| (code, json!({ "error": msg }).to_string());
    if path != "/tickle" {
        return error(404, format!("no such endpoint {path}"));
    }
    if !method.eq_ignore_ascii_case("POST") {
        return error(405, format!("{method} not allowed"));
    }
    let req: TickleRequest = match serde_json::from_str(body) {
        Ok(r) => r,
        Err(e) => return error(400, format!("bad tickle request: {e}")),
    };
    match handler(req.from, req.to) {
        Ok(TickleOutcome::Delivered { .. }) => (200, json!({ "status": "ok" }).to_string()),
        Ok(TickleOutcome::Queued) => (200, json!({ "status": "ok", "queued": true }).to_string()),
        Err(e @ GatewayError::SelfTickle(_)) => error(400, e.to_string()),
        Err(e) => error(409, e.to_string()),
    }
}

pub struct TickleServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    handle: Option<JoinHandle<()>>,
}

impl TickleServer {
    pub fn spawn(addr: &str, handler: TickleHandler) -> std::io::Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
        let local = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::Other, "not an IP listener"))?;
        let server = Arc::new(server);
        let handle = {
            let server = server.clone();
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut body = String::new();
                    let (code, reply) = match req.as_reader().read_to_string(&mut body) {
                        Ok(_) => route(req.method().as_str(), req.url(), &body, &handler),
                        Err(e) => (400, json!({ "error": e.to_string() }).to_string()),
                    };
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
                    let resp = tiny_http::Response::from_string(reply).with_status_code(code).with_header(header);
                    if let Err(e) = req.respond(resp) {
                        log::debug!("tickle response failed: {e}");
                    }
                }
            })
        };
        Ok(TickleServer { server, addr: local, handle: Some(handle) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for TickleServer {
    fn drop(&mut self) {
        self.server.unblock();
    }
}
