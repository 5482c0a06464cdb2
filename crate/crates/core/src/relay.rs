//! Broadcast relay for cadence updates.
//!
//! The relay accepts a configured number of clients, announces the session
//! start, and from then on rebroadcasts every accepted update to all other
//! clients. Each connection is serviced by its own thread; the broadcast,
//! the state mutation and the log append for one update happen inside a
//! single critical section, so deliveries are exactly-once and per-sender
//! order is preserved end to end.
//!
//! Every accepted update appends one record of the entire session state to
//! the log. A log line is tab-separated:
//! `server_ts_ms<TAB>sender<TAB>stride_ms<TAB>user:last_ms[,user:last_ms...]`
//! Replaying a log reproduces the exact final state of the live session.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::protocol::{parse_client_line, ClientMessage, ServerMessage};

#[derive(Debug, Error)]
pub enum RelayError {
    #[error("need at least two clients, got {0}")]
    TooFewClients(usize),
    #[error("endpoint unavailable: {0}")]
    EndpointUnavailable(std::io::Error),
    #[error("{path}:{line}: malformed log line")]
    MalformedLine { path: String, line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One full-state log record, appended per accepted update.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub server_ts_ms: u64,
    pub sender: String,
    pub stride_ms: u32,
    /// Last known stride duration per user at this point.
    pub snapshot: BTreeMap<String, u32>,
}

pub fn format_log_record(r: &LogRecord) -> String {
    let mut line = format!("{}\t{}\t{}\t", r.server_ts_ms, r.sender, r.stride_ms);
    for (i, (user, ms)) in r.snapshot.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        let _ = write!(line, "{user}:{ms}");
    }
    line
}

pub fn write_log(records: &[LogRecord], path: &Path) -> Result<(), RelayError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&format_log_record(r));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, RelayError> {
    let text = fs::read_to_string(path)?;
    parse_log(&text, &path.display().to_string())
}

pub fn parse_log(text: &str, path: &str) -> Result<Vec<LogRecord>, RelayError> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = || RelayError::MalformedLine {
            path: path.to_string(),
            line: idx + 1,
        };
        let mut cols = line.split('\t');
        let ts: u64 = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
        let sender = cols.next().ok_or_else(bad)?.to_string();
        let stride: u32 = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
        let snap_col = cols.next().ok_or_else(bad)?;
        if cols.next().is_some() {
            return Err(bad());
        }
        let mut snapshot = BTreeMap::new();
        for entry in snap_col.split(',').filter(|e| !e.is_empty()) {
            let (user, ms) = entry.split_once(':').ok_or_else(bad)?;
            let ms: u32 = ms.parse().map_err(|_| bad())?;
            snapshot.insert(user.to_string(), ms);
        }
        if !records.is_empty() {
            let prev: &LogRecord = records.last().unwrap();
            if ts < prev.server_ts_ms {
                return Err(bad());
            }
        }
        records.push(LogRecord {
            server_ts_ms: ts,
            sender,
            stride_ms: stride,
            snapshot,
        });
    }
    Ok(records)
}

/// Fold a log back into the final last-known map.
pub fn replay_final_state(records: &[LogRecord]) -> BTreeMap<String, u32> {
    let mut state = BTreeMap::new();
    for r in records {
        state.insert(r.sender.clone(), r.stride_ms);
    }
    state
}

/// Everything the relay knows once the session has drained.
#[derive(Debug, Clone)]
pub struct SessionSummary {
    pub records: Vec<LogRecord>,
    pub final_state: BTreeMap<String, u32>,
    pub dropped_updates: usize,
}

struct Session {
    expected: usize,
    started: bool,
    clients: Vec<(String, TcpStream)>,
    departed: usize,
    last_known: BTreeMap<String, u32>,
    records: Vec<LogRecord>,
    log_file: Option<fs::File>,
    dropped: usize,
    epoch: Instant,
}

impl Session {
    fn broadcast_except(&mut self, skip: Option<&str>, msg: &ServerMessage) {
        let line = format!("{msg}\n");
        for (id, stream) in self.clients.iter_mut() {
            if Some(id.as_str()) != skip {
                let _ = stream.write_all(line.as_bytes());
            }
        }
    }

    fn now_ms(&self) -> u64 {
        self.epoch.elapsed().as_millis() as u64
    }
}

/// Handle to a running relay session.
pub struct RelayHandle {
    local_addr: std::net::SocketAddr,
    shared: Arc<Mutex<Session>>,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

/// Bind and serve one session: `expected_clients` handshakes, then
/// rebroadcast updates until every client leaves.
pub fn start_session(
    listen: &str,
    expected_clients: usize,
    log_path: Option<PathBuf>,
) -> Result<RelayHandle, RelayError> {
    if expected_clients < 2 {
        return Err(RelayError::TooFewClients(expected_clients));
    }
    let listener = TcpListener::bind(listen).map_err(RelayError::EndpointUnavailable)?;
    let local_addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;

    let log_file = match &log_path {
        Some(p) => Some(fs::File::create(p)?),
        None => None,
    };
    let shared = Arc::new(Mutex::new(Session {
        expected: expected_clients,
        started: false,
        clients: Vec::new(),
        departed: 0,
        last_known: BTreeMap::new(),
        records: Vec::new(),
        log_file,
        dropped: 0,
        epoch: Instant::now(),
    }));
    let shutdown = Arc::new(AtomicBool::new(false));

    let accept_shared = Arc::clone(&shared);
    let accept_shutdown = Arc::clone(&shutdown);
    let accept_thread = thread::spawn(move || {
        let mut conn_threads = Vec::new();
        while !accept_shutdown.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let sess = Arc::clone(&accept_shared);
                    let stop = Arc::clone(&accept_shutdown);
                    conn_threads.push(thread::spawn(move || serve_connection(stream, sess, stop)));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    {
                        let s = accept_shared.lock().unwrap();
                        if s.started && s.clients.is_empty() {
                            break; // session drained
                        }
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(_) => break,
            }
        }
        for t in conn_threads {
            let _ = t.join();
        }
    });

    Ok(RelayHandle {
        local_addr,
        shared,
        shutdown,
        accept_thread: Some(accept_thread),
    })
}

fn serve_connection(stream: TcpStream, shared: Arc<Mutex<Session>>, stop: Arc<AtomicBool>) {
    stream
        .set_read_timeout(Some(Duration::from_millis(50)))
        .ok();
    let mut writer = match stream.try_clone() {
        Ok(w) => w,
        Err(_) => return,
    };
    let mut reader = BufReader::new(stream);
    let mut user_id: Option<String> = None;
    // The line buffer persists across read timeouts: read_line may hand
    // back a partial line with WouldBlock and the prefix must be kept.
    let mut line = String::new();

    loop {
        match reader.read_line(&mut line) {
            Ok(0) => break, // peer closed
            Ok(_) => {}
            Err(e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                continue;
            }
            Err(_) => break,
        }
        let parsed = parse_client_line(&line);
        line.clear();
        let msg = match parsed {
            Ok(m) => m,
            Err(_) => {
                let _ = writeln!(
                    writer,
                    "{}",
                    ServerMessage::Err {
                        code: "malformed".into(),
                        detail: None
                    }
                );
                continue;
            }
        };
        match msg {
            ClientMessage::Hello { user_id: id } => {
                let mut s = shared.lock().unwrap();
                if user_id.is_some() {
                    continue; // repeated HELLO on the same connection
                }
                if s.started {
                    let _ = writeln!(
                        writer,
                        "{}",
                        ServerMessage::Err {
                            code: "busy".into(),
                            detail: None
                        }
                    );
                    break;
                }
                if s.clients.iter().any(|(u, _)| *u == id) {
                    let _ = writeln!(
                        writer,
                        "{}",
                        ServerMessage::Err {
                            code: "duplicate".into(),
                            detail: Some(id.clone())
                        }
                    );
                    break;
                }
                match writer.try_clone() {
                    Ok(w) => s.clients.push((id.clone(), w)),
                    Err(_) => break,
                }
                user_id = Some(id);
                if s.clients.len() == s.expected {
                    s.started = true;
                    let n = s.expected as u32;
                    s.broadcast_except(None, &ServerMessage::Start { clients: n });
                }
            }
            ClientMessage::Update(update) => {
                let mut s = shared.lock().unwrap();
                let known = user_id
                    .as_deref()
                    .is_some_and(|me| me == update.user_id)
                    && s.started;
                if !known {
                    // Unknown or impersonated sender: drop and count.
                    s.dropped += 1;
                    continue;
                }
                // Atomic: forward, mutate state, append log.
                s.broadcast_except(
                    Some(&update.user_id),
                    &ServerMessage::Update(update.clone()),
                );
                s.last_known
                    .insert(update.user_id.clone(), update.stride_ms);
                let record = LogRecord {
                    server_ts_ms: s.now_ms(),
                    sender: update.user_id.clone(),
                    stride_ms: update.stride_ms,
                    snapshot: s.last_known.clone(),
                };
                if let Some(f) = s.log_file.as_mut() {
                    let _ = writeln!(f, "{}", format_log_record(&record));
                }
                s.records.push(record);
            }
            ClientMessage::Bye => break,
        }
    }

    if let Some(id) = user_id {
        let mut s = shared.lock().unwrap();
        if let Some(pos) = s.clients.iter().position(|(u, _)| *u == id) {
            s.clients.remove(pos);
            s.departed += 1;
        }
        if s.started && !s.clients.is_empty() {
            s.broadcast_except(
                None,
                &ServerMessage::Err {
                    code: "peer_lost".into(),
                    detail: Some(id),
                },
            );
        }
    }
}

impl RelayHandle {
    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.local_addr
    }

    /// True once the session has started and every client has left.
    pub fn is_drained(&self) -> bool {
        let s = self.shared.lock().unwrap();
        s.started && s.clients.is_empty()
    }

    /// Ask the accept loop to stop without waiting for a drain.
    pub fn shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
    }

    /// Wait until the session drains (or `timeout` passes), then stop and
    /// return the collected records and final state.
    pub fn join(mut self, timeout: Duration) -> SessionSummary {
        let deadline = Instant::now() + timeout;
        while !self.is_drained() && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(5));
        }
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
        let s = self.shared.lock().unwrap();
        SessionSummary {
            records: s.records.clone(),
            final_state: s.last_known.clone(),
            dropped_updates: s.dropped,
        }
    }
}
