//! Per-walker client: forwards local cadence updates to the relay and
//! drives the local vibration scheduler from remote ones.
//!
//! The two duties are independent: disabling haptics stops pulses but never
//! forwarding, and a broken scheduler cannot lose relay traffic. `NodeCore`
//! is the pure state machine shared by the real-time socket runner and the
//! deterministic simulator; `run_node` is the runner, generic over a
//! `Transport` so tests can drive it without a network.

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::protocol::{
    parse_server_line, CadenceUpdate, ClientMessage, ProtocolError, ServerMessage,
};
use crate::scheduler::{Scheduler, SchedulerError, Side, VibrationPulse};
use crate::walker;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("relay unreachable: {0}")]
    RelayUnreachable(io::Error),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub user_id: String,
    pub haptics_enabled: bool,
    /// Seed the scheduler immediately instead of waiting for the first
    /// remote update.
    pub initial_period_ms: Option<u32>,
    pub first_side: Side,
}

impl NodeConfig {
    pub fn new(user_id: &str) -> Result<Self, ProtocolError> {
        crate::protocol::validate_user_id(user_id)?;
        Ok(Self {
            user_id: user_id.to_string(),
            haptics_enabled: true,
            initial_period_ms: None,
            first_side: Side::Left,
        })
    }
}

/// Scheduler-plus-haptics state of one node.
///
/// The scheduler stays unseeded until the first remote update arrives; a
/// follower feels nothing before the partner's first stride reaches it.
/// While haptics are off the period keeps tracking updates, but no pulses
/// fire; re-enabling restarts the pulse train at that moment.
#[derive(Debug, Clone)]
pub struct NodeCore {
    config: NodeConfig,
    scheduler: Option<Scheduler>,
    pulses: Vec<VibrationPulse>,
    /// Bumped whenever previously computed due times become stale.
    generation: u64,
}

impl NodeCore {
    pub fn new(config: NodeConfig) -> Self {
        let scheduler = config
            .initial_period_ms
            .map(|p| Scheduler::with_first_side(p as i64, 0, config.first_side).expect("valid period"));
        Self {
            config,
            scheduler,
            pulses: Vec::new(),
            generation: 0,
        }
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn haptics_enabled(&self) -> bool {
        self.config.haptics_enabled
    }

    pub fn pulses(&self) -> &[VibrationPulse] {
        &self.pulses
    }

    pub fn on_remote_update(&mut self, period_ms: u32, now_ms: u64) {
        match self.scheduler.as_mut() {
            Some(s) => {
                let _ = s.on_update(period_ms as i64, now_ms);
            }
            None => {
                let first = self.config.first_side;
                self.scheduler =
                    Some(Scheduler::with_first_side(period_ms as i64, now_ms, first).expect(
                        "periods from the wire are positive",
                    ));
            }
        }
        self.generation += 1;
    }

    pub fn set_haptics(&mut self, enabled: bool, now_ms: u64) {
        if enabled && !self.config.haptics_enabled {
            if let Some(s) = self.scheduler.as_mut() {
                s.restart(now_ms, self.config.first_side);
            }
        }
        self.config.haptics_enabled = enabled;
        self.generation += 1;
    }

    /// Due time of the next pulse, if haptics are on and a period is known.
    pub fn next_pulse_due(&self, now_ms: u64) -> Option<u64> {
        if !self.config.haptics_enabled {
            return None;
        }
        self.scheduler.as_ref()?.next_due_ms(now_ms).ok()
    }

    /// Fire the pulse due at or before `now_ms`, recording it.
    pub fn fire_pulse(&mut self, now_ms: u64) -> Option<VibrationPulse> {
        if !self.config.haptics_enabled {
            return None;
        }
        let pulse = self.scheduler.as_mut()?.next_pulse(now_ms).ok()?;
        self.pulses.push(pulse);
        Some(pulse)
    }

    /// Stride period as the wearer senses it from recent pulses.
    /// None while haptics are off or before two same-side pulses exist.
    pub fn perceived_period_ms(&self) -> Option<f64> {
        if !self.config.haptics_enabled {
            return None;
        }
        walker::perceive_pulses(&self.pulses).ok()
    }
}

/// Message transport between a node and the relay.
pub trait Transport {
    fn send(&mut self, msg: &ClientMessage) -> io::Result<()>;
    /// Non-blocking poll for the next server message; Ok(None) when idle,
    /// Err(UnexpectedEof) once the relay is gone.
    fn try_recv(&mut self) -> io::Result<Option<ServerMessage>>;
}

/// Line-oriented TCP transport.
pub struct TcpTransport {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
    buf: String,
}

impl TcpTransport {
    pub fn connect(addr: &str) -> Result<Self, NodeError> {
        let stream = TcpStream::connect(addr).map_err(NodeError::RelayUnreachable)?;
        stream.set_read_timeout(Some(Duration::from_millis(10)))?;
        let writer = stream.try_clone()?;
        Ok(Self {
            writer,
            reader: BufReader::new(stream),
            buf: String::new(),
        })
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, msg: &ClientMessage) -> io::Result<()> {
        writeln!(self.writer, "{msg}")
    }

    fn try_recv(&mut self) -> io::Result<Option<ServerMessage>> {
        // read_line may time out holding a partial line in buf; keep the
        // prefix and finish it on a later poll.
        match self.reader.read_line(&mut self.buf) {
            Ok(0) => Err(io::Error::from(io::ErrorKind::UnexpectedEof)),
            Ok(_) => {
                let parsed = parse_server_line(&self.buf);
                self.buf.clear();
                parsed
                    .map(Some)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
            }
            Err(e)
                if e.kind() == io::ErrorKind::WouldBlock || e.kind() == io::ErrorKind::TimedOut =>
            {
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}

/// Deterministic in-process transport for tests and the simulator.
#[derive(Debug, Default)]
pub struct LoopbackTransport {
    pub sent: Vec<ClientMessage>,
    pub incoming: std::collections::VecDeque<ServerMessage>,
    /// Simulates the relay vanishing.
    pub closed: bool,
}

impl Transport for LoopbackTransport {
    fn send(&mut self, msg: &ClientMessage) -> io::Result<()> {
        self.sent.push(msg.clone());
        Ok(())
    }

    fn try_recv(&mut self) -> io::Result<Option<ServerMessage>> {
        match self.incoming.pop_front() {
            Some(m) => Ok(Some(m)),
            None if self.closed => Err(io::Error::from(io::ErrorKind::UnexpectedEof)),
            None => Ok(None),
        }
    }
}

/// Events surfaced by the node runner.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeEvent {
    Started { clients: u32 },
    Pulse(VibrationPulse),
    Remote(CadenceUpdate),
    PeerLost(String),
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// How long to keep servicing remote traffic after the local update
    /// source is exhausted.
    pub linger_ms: u64,
    /// Hard cap on total runtime.
    pub max_runtime_ms: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            linger_ms: 300,
            max_runtime_ms: 60_000,
        }
    }
}

/// Real-time node loop: handshake, forward the scripted local updates,
/// react to remote updates, fire pulses on the wall clock.
///
/// Local updates are sent as fast as the relay accepts them (their
/// timestamps already carry the recorded timing); pulses follow the wall
/// clock from the moment the first remote update seeds the scheduler.
pub fn run_node(
    config: NodeConfig,
    transport: &mut dyn Transport,
    local_updates: &[CadenceUpdate],
    options: RunOptions,
    mut on_event: impl FnMut(NodeEvent),
) -> Result<NodeCore, NodeError> {
    let epoch = Instant::now();
    let now_ms = |e: &Instant| e.elapsed().as_millis() as u64;

    transport.send(&ClientMessage::Hello {
        user_id: config.user_id.clone(),
    })?;

    // Wait for START before streaming.
    loop {
        if now_ms(&epoch) > options.max_runtime_ms {
            return Err(NodeError::ProtocolViolation(
                "relay never started the session".into(),
            ));
        }
        match transport.try_recv().map_err(NodeError::RelayUnreachable)? {
            Some(ServerMessage::Start { clients }) => {
                on_event(NodeEvent::Started { clients });
                break;
            }
            Some(ServerMessage::Err { code, detail }) => {
                return Err(NodeError::ProtocolViolation(format!(
                    "relay refused: {code} {}",
                    detail.unwrap_or_default()
                )));
            }
            Some(ServerMessage::Update(_)) => {
                return Err(NodeError::ProtocolViolation(
                    "update received before session start".into(),
                ));
            }
            None => std::thread::sleep(Duration::from_millis(2)),
        }
    }

    let mut core = NodeCore::new(config);
    let mut pending = local_updates.iter();
    let mut next_local = pending.next();
    let mut idle_since: Option<u64> = None;

    loop {
        let t = now_ms(&epoch);
        if t > options.max_runtime_ms {
            break;
        }

        // Forwarding path.
        if let Some(update) = next_local {
            transport.send(&ClientMessage::Update(update.clone()))?;
            next_local = pending.next();
            if next_local.is_none() {
                idle_since = Some(t);
            }
            continue;
        }

        // Actuation path.
        while let Some(due) = core.next_pulse_due(t) {
            if due > t {
                break;
            }
            if let Some(pulse) = core.fire_pulse(t) {
                on_event(NodeEvent::Pulse(pulse));
            }
        }

        match transport.try_recv() {
            Ok(Some(ServerMessage::Update(update))) => {
                core.on_remote_update(update.stride_ms, t);
                on_event(NodeEvent::Remote(update));
            }
            Ok(Some(ServerMessage::Err { code, detail })) if code == "peer_lost" => {
                on_event(NodeEvent::PeerLost(detail.unwrap_or_default()));
            }
            Ok(Some(_)) => {}
            Ok(None) => {
                if let Some(start) = idle_since {
                    if t.saturating_sub(start) >= options.linger_ms {
                        break;
                    }
                }
                std::thread::sleep(Duration::from_millis(1));
            }
            Err(_) => break, // relay gone
        }
    }

    let _ = transport.send(&ClientMessage::Bye);
    Ok(core)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(id: &str) -> NodeConfig {
        NodeConfig::new(id).unwrap()
    }

    #[test]
    fn scheduler_unseeded_until_first_update() {
        let mut core = NodeCore::new(config("A"));
        assert_eq!(core.next_pulse_due(0), None);
        core.on_remote_update(1000, 500);
        assert_eq!(core.next_pulse_due(500), Some(500));
    }

    #[test]
    fn haptics_off_blocks_pulses_not_state() {
        let mut core = NodeCore::new(config("A"));
        core.set_haptics(false, 0);
        core.on_remote_update(1000, 0);
        assert_eq!(core.next_pulse_due(0), None);
        assert_eq!(core.fire_pulse(0), None);
        assert_eq!(core.perceived_period_ms(), None);
        // Re-enable: the pulse train restarts now, on the configured side.
        core.set_haptics(true, 2000);
        assert_eq!(core.next_pulse_due(2000), Some(2000));
        let p = core.fire_pulse(2000).unwrap();
        assert_eq!((p.side, p.start_ms), (Side::Left, 2000));
    }

    #[test]
    fn perceived_period_needs_same_side_pair() {
        let mut core = NodeCore::new(config("A"));
        core.on_remote_update(1000, 0);
        assert_eq!(core.perceived_period_ms(), None);
        core.fire_pulse(0);
        assert_eq!(core.perceived_period_ms(), None); // one pulse
        core.fire_pulse(500);
        assert_eq!(core.perceived_period_ms(), None); // L R only
        core.fire_pulse(1000);
        assert_eq!(core.perceived_period_ms(), Some(1000.0));
    }

    #[test]
    fn period_change_shows_within_half_period() {
        let mut core = NodeCore::new(config("A"));
        core.on_remote_update(1000, 0);
        for t in [0, 500, 1000] {
            core.fire_pulse(t);
        }
        core.on_remote_update(900, 1200);
        let due = core.next_pulse_due(1200).unwrap();
        assert!(due <= 1200 + 450);
        core.fire_pulse(due);
        // The most recent same-side pair still spans the update, so the
        // first estimate mixes the two periods. The next pulse settles it.
        assert_eq!(core.perceived_period_ms(), Some(950.0));
        let due2 = core.next_pulse_due(due).unwrap();
        core.fire_pulse(due2);
        assert_eq!(core.perceived_period_ms(), Some(900.0));
    }

    #[test]
    fn run_node_forwards_all_updates_without_haptics() {
        let mut transport = LoopbackTransport::default();
        transport.incoming.push_back(ServerMessage::Start { clients: 2 });
        let updates: Vec<CadenceUpdate> = (1..=5)
            .map(|k| CadenceUpdate::new("A", 1000 + k, k as u64 * 1000).unwrap())
            .collect();
        let mut cfg = config("A");
        cfg.haptics_enabled = false;
        let mut pulses = 0;
        let core = run_node(
            cfg,
            &mut transport,
            &updates,
            RunOptions {
                linger_ms: 10,
                max_runtime_ms: 5_000,
            },
            |ev| {
                if matches!(ev, NodeEvent::Pulse(_)) {
                    pulses += 1;
                }
            },
        )
        .unwrap();
        assert_eq!(pulses, 0);
        assert!(core.pulses().is_empty());
        let sent_updates: Vec<&ClientMessage> = transport
            .sent
            .iter()
            .filter(|m| matches!(m, ClientMessage::Update(_)))
            .collect();
        assert_eq!(sent_updates.len(), 5);
        assert_eq!(transport.sent.last(), Some(&ClientMessage::Bye));
    }

    #[test]
    fn run_node_drives_scheduler_from_remote_updates() {
        let mut transport = LoopbackTransport::default();
        transport.incoming.push_back(ServerMessage::Start { clients: 2 });
        transport
            .incoming
            .push_back(ServerMessage::Update(CadenceUpdate::new("B", 400, 0).unwrap()));
        let mut events = Vec::new();
        let core = run_node(
            config("A"),
            &mut transport,
            &[],
            RunOptions {
                linger_ms: 900,
                max_runtime_ms: 5_000,
            },
            |ev| events.push(ev),
        )
        .unwrap();
        let pulse_count = core.pulses().len();
        assert!(pulse_count >= 2, "expected pulses, got {pulse_count}");
        assert!(events
            .iter()
            .any(|e| matches!(e, NodeEvent::Remote(u) if u.stride_ms == 400)));
        // Strict side alternation on the emitted pulses.
        for pair in core.pulses().windows(2) {
            assert_eq!(pair[1].side, pair[0].side.opposite());
        }
    }

    #[test]
    fn run_node_reports_refusal() {
        let mut transport = LoopbackTransport::default();
        transport.incoming.push_back(ServerMessage::Err {
            code: "busy".into(),
            detail: None,
        });
        let err = run_node(
            config("C"),
            &mut transport,
            &[],
            RunOptions::default(),
            |_| {},
        )
        .unwrap_err();
        assert!(matches!(err, NodeError::ProtocolViolation(_)));
    }
}
