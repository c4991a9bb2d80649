//! A query-billed classification service and the client-side oracle that
//! talks to it. The server speaks a minimal HTTP/1.1 dialect over plain TCP
//! (POST bodies are JSON), meters every answered query per client, and
//! returns throttling as a first-class 429 response rather than an error
//! disguised as a classification.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::OracleError;
use crate::targets::{ClassificationResponse, Knowledge, OracleBackend, TrainedModel};
use crate::vocab::TokenId;

/// Sliding-window rate limit: at most `max_queries` billed queries per
/// `window_ms` milliseconds, after which the client is refused until the
/// window rolls over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrottlePolicy {
    pub max_queries: u64,
    pub window_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BillingPolicy {
    /// Monetary cost billed per answered window query.
    pub cost_per_query: f64,
    pub throttle: Option<ThrottlePolicy>,
    /// What the service reveals: decision-only endpoints strip scores.
    pub knowledge_mode: Knowledge,
}

impl Default for BillingPolicy {
    fn default() -> Self {
        Self { cost_per_query: 1.0, throttle: None, knowledge_mode: Knowledge::Decision }
    }
}

/// Per-client billing snapshot as exposed by the stats endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientAccount {
    pub client_id: String,
    pub queries_total: u64,
    pub spend_total: f64,
}

#[derive(Debug)]
struct AccountState {
    queries_total: u64,
    window_start: Instant,
    window_queries: u64,
}

#[derive(Deserialize)]
struct WindowRequest {
    client_id: String,
    window: Vec<TokenId>,
}

#[derive(Deserialize)]
struct TraceRequest {
    client_id: String,
    trace: Vec<TokenId>,
}

#[derive(Serialize, Deserialize)]
struct ClassifyReply {
    label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    /// Window queries billed for this call (trace endpoint bills several).
    billed: u64,
}

#[derive(Serialize, Deserialize)]
struct StatsReply {
    clients: Vec<ClientAccount>,
}

#[derive(Serialize, Deserialize)]
struct ErrorReply {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    retry_after_ms: Option<u64>,
}

/// The classification service: one model, one billing policy, per-client
/// accounts. Shared across connection threads.
pub struct ClassifierService {
    model: TrainedModel,
    policy: BillingPolicy,
    accounts: Mutex<HashMap<String, AccountState>>,
}

enum Reply {
    Ok(ClassifyReply),
    Throttled { retry_after_ms: u64 },
    Bad(String),
    Internal(String),
}

impl ClassifierService {
    pub fn new(model: TrainedModel, policy: BillingPolicy) -> Self {
        Self { model, policy, accounts: Mutex::new(HashMap::new()) }
    }

    /// Billing gate: either bills `cost` queries to the client and returns
    /// true, or refuses with the remaining throttle time. Refused calls are
    /// never billed.
    fn try_bill(&self, client_id: &str, cost: u64) -> Result<(), u64> {
        let mut accounts = self.accounts.lock().expect("account table poisoned");
        let state = accounts.entry(client_id.to_string()).or_insert_with(|| AccountState {
            queries_total: 0,
            window_start: Instant::now(),
            window_queries: 0,
        });
        if let Some(throttle) = self.policy.throttle {
            let window = Duration::from_millis(throttle.window_ms);
            let elapsed = state.window_start.elapsed();
            if elapsed >= window {
                state.window_start = Instant::now();
                state.window_queries = 0;
            } else if state.window_queries + cost > throttle.max_queries {
                let remaining = window.saturating_sub(elapsed);
                return Err(remaining.as_millis().max(1) as u64);
            }
            state.window_queries += cost;
        }
        state.queries_total += cost;
        Ok(())
    }

    fn classify(&self, client_id: &str, tokens: &[TokenId], cost: u64) -> Reply {
        if let Err(retry_after_ms) = self.try_bill(client_id, cost) {
            return Reply::Throttled { retry_after_ms };
        }
        match self.model.classify_sequence(tokens) {
            Ok(resp) => {
                let resp = match self.policy.knowledge_mode {
                    Knowledge::Decision => resp.stripped(),
                    Knowledge::Score => resp,
                };
                Reply::Ok(ClassifyReply {
                    label: if resp.is_malicious() { "malicious" } else { "benign" }.to_string(),
                    score: resp.score,
                    billed: cost,
                })
            }
            Err(e) => Reply::Internal(e.to_string()),
        }
    }

    fn handle(&self, method: &str, path: &str, body: &[u8]) -> (u16, String) {
        let reply = match (method, path) {
            ("POST", "/v1/classify/window") => {
                match serde_json::from_slice::<WindowRequest>(body) {
                    Ok(req) => self.classify(&req.client_id, &req.window, 1),
                    Err(e) => Reply::Bad(e.to_string()),
                }
            }
            ("POST", "/v1/classify/trace") => match serde_json::from_slice::<TraceRequest>(body) {
                Ok(req) => {
                    let cost = self.model.window_count(&req.trace);
                    self.classify(&req.client_id, &req.trace, cost)
                }
                Err(e) => Reply::Bad(e.to_string()),
            },
            ("GET", "/v1/stats") => {
                let body = serde_json::to_string(&StatsReply { clients: self.stats() })
                    .expect("stats serialize");
                return (200, body);
            }
            _ => return (404, json_error("no such endpoint", None)),
        };
        match reply {
            Reply::Ok(r) => (200, serde_json::to_string(&r).expect("reply serialize")),
            Reply::Throttled { retry_after_ms } => {
                (429, json_error("throttled", Some(retry_after_ms)))
            }
            Reply::Bad(msg) => (400, json_error(&msg, None)),
            Reply::Internal(msg) => (500, json_error(&msg, None)),
        }
    }

    pub fn stats(&self) -> Vec<ClientAccount> {
        let accounts = self.accounts.lock().expect("account table poisoned");
        let mut out: Vec<ClientAccount> = accounts
            .iter()
            .map(|(id, s)| ClientAccount {
                client_id: id.clone(),
                queries_total: s.queries_total,
                spend_total: s.queries_total as f64 * self.policy.cost_per_query,
            })
            .collect();
        out.sort_by(|a, b| a.client_id.cmp(&b.client_id));
        out
    }

    pub fn knowledge_mode(&self) -> Knowledge {
        self.policy.knowledge_mode
    }
}

fn json_error(msg: &str, retry_after_ms: Option<u64>) -> String {
    serde_json::to_string(&ErrorReply { error: msg.to_string(), retry_after_ms })
        .expect("error serialize")
}

fn status_text(code: u16) -> &'static str {
    match code {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        429 => "Too Many Requests",
        _ => "Internal Server Error",
    }
}

fn write_response(stream: &mut TcpStream, code: u16, body: &str) -> std::io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        code,
        status_text(code),
        body.len(),
        body
    )
}

/// Reads one request: request line, headers (only Content-Length matters),
/// then exactly the announced body.
fn read_request(stream: &mut TcpStream) -> std::io::Result<(String, String, Vec<u8>)> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 {
            break;
        }
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some(v) = header.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = v.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    Ok((method, path, body))
}

/// A running server; dropping or calling [`ServerHandle::shutdown`] stops
/// the accept loop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
    pub service: Arc<ClassifierService>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept with a throwaway connection.
        let _ = TcpStream::connect(self.addr);
        if let Some(join) = self.join.take() {
            let _ = join.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds `bind_addr` (use port 0 for an ephemeral port) and serves until
/// shut down. Each connection carries one request.
pub fn serve(
    model: TrainedModel,
    policy: BillingPolicy,
    bind_addr: &str,
) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(bind_addr)?;
    let addr = listener.local_addr()?;
    let service = Arc::new(ClassifierService::new(model, policy));
    let stop = Arc::new(AtomicBool::new(false));
    let (svc, flag) = (Arc::clone(&service), Arc::clone(&stop));
    let join = std::thread::spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(mut stream) = conn else { continue };
            let svc = Arc::clone(&svc);
            std::thread::spawn(move || {
                let (code, body) = match read_request(&mut stream) {
                    Ok((method, path, body)) => svc.handle(&method, &path, &body),
                    Err(e) => (400, json_error(&e.to_string(), None)),
                };
                let _ = write_response(&mut stream, code, &body);
            });
        }
    });
    Ok(ServerHandle { addr, stop, join: Some(join), service })
}

/// Client-side backend for a remote classification service. Wrap it with
/// [`crate::targets::make_oracle`] to get the same metering and knowledge
/// stripping as an in-process oracle.
pub struct RemoteBackend {
    addr: SocketAddr,
    client_id: String,
    score_capable: bool,
    timeout: Duration,
}

impl RemoteBackend {
    pub fn new(addr: SocketAddr, client_id: impl Into<String>, score_capable: bool) -> Self {
        Self {
            addr,
            client_id: client_id.into(),
            score_capable,
            timeout: Duration::from_secs(5),
        }
    }

    fn post_once(&self, path: &str, body: &str) -> Result<(u16, String), OracleError> {
        let net = |e: std::io::Error| OracleError::Network(e.to_string());
        let mut stream = TcpStream::connect_timeout(&self.addr, self.timeout).map_err(net)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(net)?;
        stream.set_write_timeout(Some(self.timeout)).map_err(net)?;
        write!(
            stream,
            "POST {} HTTP/1.1\r\nHost: {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            path,
            self.addr,
            body.len(),
            body
        )
        .map_err(net)?;
        let mut reader = BufReader::new(stream);
        let mut status_line = String::new();
        reader.read_line(&mut status_line).map_err(net)?;
        let code: u16 = status_line
            .split_whitespace()
            .nth(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| OracleError::Protocol(format!("bad status line {status_line:?}")))?;
        let mut content_length = 0usize;
        loop {
            let mut header = String::new();
            if reader.read_line(&mut header).map_err(net)? == 0 {
                break;
            }
            let header = header.trim_end();
            if header.is_empty() {
                break;
            }
            if let Some(v) = header.to_ascii_lowercase().strip_prefix("content-length:") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
        let mut buf = vec![0u8; content_length];
        reader.read_exact(&mut buf).map_err(net)?;
        let reply = String::from_utf8(buf)
            .map_err(|e| OracleError::Protocol(format!("non-utf8 body: {e}")))?;
        Ok((code, reply))
    }

    /// One retry on transport errors; HTTP-level failures are not retried.
    fn post(&self, path: &str, body: &str) -> Result<ClassifyReply, OracleError> {
        let (code, reply) = match self.post_once(path, body) {
            Ok(r) => r,
            Err(OracleError::Network(_)) => self.post_once(path, body)?,
            Err(e) => return Err(e),
        };
        match code {
            200 => serde_json::from_str(&reply)
                .map_err(|e| OracleError::Protocol(format!("bad reply body: {e}"))),
            429 => Err(OracleError::Throttled),
            _ => Err(OracleError::Protocol(format!("service returned {code}: {reply}"))),
        }
    }

    fn to_response(&self, reply: &ClassifyReply) -> Result<ClassificationResponse, OracleError> {
        let decision = match reply.label.as_str() {
            "malicious" => crate::targets::Decision::Malicious,
            "benign" => crate::targets::Decision::Benign,
            other => return Err(OracleError::Protocol(format!("unknown label {other:?}"))),
        };
        Ok(ClassificationResponse { decision, score: reply.score })
    }
}

impl OracleBackend for RemoteBackend {
    fn raw_classify(&self, tokens: &[TokenId]) -> Result<ClassificationResponse, OracleError> {
        let body = serde_json::json!({ "client_id": self.client_id, "window": tokens });
        let reply = self.post("/v1/classify/window", &body.to_string())?;
        self.to_response(&reply)
    }

    fn score_capable(&self) -> bool {
        self.score_capable
    }

    fn raw_classify_trace(
        &self,
        tokens: &[TokenId],
    ) -> Result<(ClassificationResponse, u64), OracleError> {
        let body = serde_json::json!({ "client_id": self.client_id, "trace": tokens });
        let reply = self.post("/v1/classify/trace", &body.to_string())?;
        Ok((self.to_response(&reply)?, reply.billed))
    }
}

/// Fetches per-client billing stats from a running service.
pub fn fetch_stats(addr: SocketAddr) -> Result<Vec<ClientAccount>, OracleError> {
    let net = |e: std::io::Error| OracleError::Network(e.to_string());
    let mut stream =
        TcpStream::connect_timeout(&addr, Duration::from_secs(5)).map_err(net)?;
    write!(stream, "GET /v1/stats HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n")
        .map_err(net)?;
    let mut raw = String::new();
    BufReader::new(stream).read_to_string(&mut raw).map_err(net)?;
    let body = raw
        .split_once("\r\n\r\n")
        .map(|(_, b)| b)
        .ok_or_else(|| OracleError::Protocol("malformed stats response".into()))?;
    let reply: StatsReply = serde_json::from_str(body)
        .map_err(|e| OracleError::Protocol(format!("bad stats body: {e}")))?;
    Ok(reply.clients)
}
