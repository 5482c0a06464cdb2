//! Deterministic discrete-event runners for the validation scenarios.
//!
//! Every experiment follows the same three-phase trial: self-paced walking
//! to record the baseline, a cued phase where haptics are active, and a
//! self-paced recovery phase. What differs is who feeds the scheduler:
//!
//! - constant reference: a fixed target offset from the walker's baseline;
//! - artificial leader: a scripted target re-drawn every 30 s;
//! - human leader: a second simulated walker whose cadence streams one way
//!   to the follower;
//! - peer to peer: both walkers stream to each other and blend the partner
//!   rhythm with their own baseline (compliance weight).
//!
//! The simulation advances a single event queue over a global millisecond
//! clock. All randomness flows from seeded generators, so identical
//! configurations produce bit-identical trial records. Ties on the clock
//! resolve by a fixed event priority, then insertion order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use thiserror::Error;

use crate::metrics::{self, Stride, ToleranceBand, Weighting};
use crate::node::{NodeConfig, NodeCore};
use crate::relay::LogRecord;
use crate::scheduler::VibrationPulse;
use crate::walker::{
    artificial_leader, constant_reference, ReferenceTimeline, Walker, WalkerError, WalkerProfile,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Walker(#[from] WalkerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Constant reference 10% faster than baseline, optionally with a
    /// secondary task loading the walker.
    PrepConstant,
    ConstantRef,
    ArtificialLeader,
    HumanLeader,
    PeerToPeer,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::PrepConstant => "prep_constant",
            ScenarioKind::ConstantRef => "constant_ref",
            ScenarioKind::ArtificialLeader => "artificial_leader",
            ScenarioKind::HumanLeader => "human_leader",
            ScenarioKind::PeerToPeer => "peer_to_peer",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "prep_constant" => Some(ScenarioKind::PrepConstant),
            "constant_ref" => Some(ScenarioKind::ConstantRef),
            "artificial_leader" => Some(ScenarioKind::ArtificialLeader),
            "human_leader" => Some(ScenarioKind::HumanLeader),
            "peer_to_peer" => Some(ScenarioKind::PeerToPeer),
            _ => None,
        }
    }

    pub fn walker_count(&self) -> usize {
        match self {
            ScenarioKind::PrepConstant
            | ScenarioKind::ConstantRef
            | ScenarioKind::ArtificialLeader => 1,
            ScenarioKind::HumanLeader | ScenarioKind::PeerToPeer => 2,
        }
    }

    fn networked(&self) -> bool {
        matches!(self, ScenarioKind::HumanLeader | ScenarioKind::PeerToPeer)
    }
}

/// Simulated wall time of the three trial phases.
///
/// The field trials covered 200/400/200 m of track; at a comfortable pace
/// that is roughly two minutes per 200 m, so the defaults are 120/240/120
/// simulated seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhasePlan {
    pub baseline_ms: u64,
    pub haptic_ms: u64,
    pub post_ms: u64,
}

impl Default for PhasePlan {
    fn default() -> Self {
        Self {
            baseline_ms: 120_000,
            haptic_ms: 240_000,
            post_ms: 120_000,
        }
    }
}

impl PhasePlan {
    pub fn haptics_on_ms(&self) -> u64 {
        self.baseline_ms
    }

    pub fn haptics_off_ms(&self) -> u64 {
        self.baseline_ms + self.haptic_ms
    }

    pub fn total_ms(&self) -> u64 {
        self.baseline_ms + self.haptic_ms + self.post_ms
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ScenarioKind,
    pub phases: PhasePlan,
    /// One profile for solo scenarios, two for dyads.
    pub profiles: Vec<WalkerProfile>,
    /// Master seed, mixed into every stochastic component.
    pub seed: u64,
    /// Analysis tolerance band, percent.
    pub band_pct: f64,
    /// Constant-reference offset from baseline, percent.
    pub delta_pct: f64,
    /// Artificial-leader re-draw interval.
    pub update_interval_ms: u64,
    /// Artificial-leader target range, ms.
    pub reference_range_ms: (f64, f64),
    /// Fixed one-way network delay injected between nodes.
    pub network_latency_ms: u64,
    /// Consecutive in-band strides required by time-to-alignment.
    pub sustain: usize,
}

impl ExperimentConfig {
    /// Config with the default walker population for the scenario.
    pub fn new(kind: ScenarioKind) -> Self {
        let profiles = match kind {
            ScenarioKind::PrepConstant
            | ScenarioKind::ConstantRef
            | ScenarioKind::ArtificialLeader => vec![WalkerProfile::default()],
            ScenarioKind::HumanLeader => vec![
                WalkerProfile::default().with_baseline(1023.0),
                WalkerProfile::default().with_baseline(1141.0),
            ],
            ScenarioKind::PeerToPeer => vec![
                WalkerProfile::default().with_baseline(1080.0),
                WalkerProfile::default().with_baseline(1120.0),
            ],
        };
        Self {
            kind,
            phases: PhasePlan::default(),
            profiles,
            seed: 0,
            band_pct: 4.0,
            delta_pct: -10.0,
            update_interval_ms: 30_000,
            reference_range_ms: (900.0, 1100.0),
            network_latency_ms: 0,
            sustain: 2,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.phases.baseline_ms == 0 || self.phases.haptic_ms == 0 || self.phases.post_ms == 0 {
            return Err(ScenarioError::Config("phase lengths must be positive".into()));
        }
        if self.profiles.len() != self.kind.walker_count() {
            return Err(ScenarioError::Config(format!(
                "{} needs {} walker profile(s), got {}",
                self.kind.name(),
                self.kind.walker_count(),
                self.profiles.len()
            )));
        }
        if self.band_pct <= 0.0 {
            return Err(ScenarioError::Config("band_pct must be positive".into()));
        }
        if self.sustain == 0 {
            return Err(ScenarioError::Config("sustain must be at least 1".into()));
        }
        Ok(())
    }

    /// Walker user ids: A, B in dyads.
    pub fn user_ids(&self) -> Vec<String> {
        (0..self.profiles.len())
            .map(|i| ((b'A' + i as u8) as char).to_string())
            .collect()
    }
}

/// Per-walker trial output.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkerTrace {
    pub user_id: String,
    pub profile: WalkerProfile,
    pub strides: Vec<Stride>,
    pub pulses: Vec<VibrationPulse>,
}

/// Complete record of one simulated trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub phases: PhasePlan,
    pub band_pct: f64,
    pub sustain: usize,
    pub haptics_on_ms: u64,
    pub haptics_off_ms: u64,
    /// Target timeline in absolute trial time. For the human-leader dyad it
    /// is the leader's stride stream; for peers, the running midpoint.
    pub reference: ReferenceTimeline,
    pub walkers: Vec<WalkerTrace>,
    pub relay_log: Vec<LogRecord>,
    /// Full config echo for meta.txt.
    pub meta: Vec<(String, String)>,
}

const PRIO_HAPTICS_ON: u8 = 0;
const PRIO_HAPTICS_OFF: u8 = 1;
const PRIO_REF_CHANGE: u8 = 2;
const PRIO_DELIVER: u8 = 3;
const PRIO_PULSE: u8 = 4;
const PRIO_STRIDE: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    HapticsOn,
    HapticsOff,
    RefChange { period_ms: u32 },
    Deliver { to: usize, stride_ms: u32 },
    Pulse { node: usize, generation: u64 },
    Stride { walker: usize },
}

#[derive(Debug, PartialEq, Eq)]
struct Queued {
    time: u64,
    prio: u8,
    seq: u64,
    event: Event,
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.prio, self.seq).cmp(&(other.time, other.prio, other.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Sim {
    kind: ScenarioKind,
    phases: PhasePlan,
    latency_ms: u64,
    user_ids: Vec<String>,
    walkers: Vec<Walker>,
    nodes: Vec<NodeCore>,
    strides: Vec<Vec<Stride>>,
    in_flight_ms: Vec<u64>,
    last_sent: Vec<Option<u32>>,
    reference: ReferenceTimeline,
    relay_records: Vec<LogRecord>,
    last_known: BTreeMap<String, u32>,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: u64,
}

impl Sim {
    fn push(&mut self, time: u64, prio: u8, event: Event) {
        self.queue.push(Reverse(Queued {
            time,
            prio,
            seq: self.seq,
            event,
        }));
        self.seq += 1;
    }

    /// Who receives walker `sender`'s updates. The human-leader link is one
    /// way by design; the follower's own updates are logged, never acted on.
    fn receivers(&self, sender: usize) -> Vec<usize> {
        match self.kind {
            ScenarioKind::PrepConstant
            | ScenarioKind::ConstantRef
            | ScenarioKind::ArtificialLeader => Vec::new(),
            ScenarioKind::HumanLeader => {
                if sender == 0 {
                    vec![1]
                } else {
                    Vec::new()
                }
            }
            ScenarioKind::PeerToPeer => (0..self.walkers.len()).filter(|j| *j != sender).collect(),
        }
    }

    /// Which walkers feel vibrations during the haptic phase.
    fn haptic_nodes(&self) -> Vec<usize> {
        match self.kind {
            ScenarioKind::PrepConstant
            | ScenarioKind::ConstantRef
            | ScenarioKind::ArtificialLeader => vec![0],
            // The leader's motors never activate.
            ScenarioKind::HumanLeader => vec![1],
            ScenarioKind::PeerToPeer => vec![0, 1],
        }
    }

    /// Target the walker aims at for the stride starting at `now`.
    fn target_for(&self, walker: usize) -> Option<f64> {
        let perceived = self.nodes[walker].perceived_period_ms()?;
        match self.kind {
            ScenarioKind::PeerToPeer => {
                let p = self.walkers[walker].profile();
                Some(p.compliance * perceived + (1.0 - p.compliance) * p.baseline_ms)
            }
            _ => Some(perceived),
        }
    }

    fn schedule_pulse(&mut self, node: usize, now: u64) {
        if let Some(due) = self.nodes[node].next_pulse_due(now) {
            let generation = self.nodes[node].generation();
            self.push(due, PRIO_PULSE, Event::Pulse { node, generation });
        }
    }

    fn begin_stride(&mut self, walker: usize, now: u64) {
        let target = self.target_for(walker);
        let d = self.walkers[walker].next_stride(target).round().max(1.0) as u64;
        self.in_flight_ms[walker] = d;
        self.push(now + d, PRIO_STRIDE, Event::Stride { walker });
    }

    fn handle_stride(&mut self, walker: usize, now: u64) {
        let duration = self.in_flight_ms[walker];
        self.strides[walker].push(Stride {
            end_ms: now as f64,
            duration_ms: duration as f64,
        });

        // Forwarding path: emit on change, independent of haptics.
        let stride_ms = duration as u32;
        if self.last_sent[walker] != Some(stride_ms) {
            self.last_sent[walker] = Some(stride_ms);
            if self.kind.networked() {
                let sender = self.user_ids[walker].clone();
                self.last_known.insert(sender.clone(), stride_ms);
                self.relay_records.push(LogRecord {
                    server_ts_ms: now,
                    sender,
                    stride_ms,
                    snapshot: self.last_known.clone(),
                });
            }
            for to in self.receivers(walker) {
                self.push(
                    now + self.latency_ms,
                    PRIO_DELIVER,
                    Event::Deliver { to, stride_ms },
                );
            }
        }

        self.begin_stride(walker, now);
    }

    fn run(&mut self) {
        let total = self.phases.total_ms();
        while let Some(Reverse(q)) = self.queue.pop() {
            if q.time > total {
                break;
            }
            let now = q.time;
            match q.event {
                Event::HapticsOn => {
                    for i in self.haptic_nodes() {
                        self.nodes[i].set_haptics(true, now);
                        if !self.kind.networked() {
                            if let Some(period) = self.reference.value_at(now) {
                                self.nodes[i].on_remote_update(period.round() as u32, now);
                            }
                        }
                        self.schedule_pulse(i, now);
                    }
                }
                Event::HapticsOff => {
                    for i in self.haptic_nodes() {
                        self.nodes[i].set_haptics(false, now);
                    }
                }
                Event::RefChange { period_ms } => {
                    self.nodes[0].on_remote_update(period_ms, now);
                    self.schedule_pulse(0, now);
                }
                Event::Deliver { to, stride_ms } => {
                    self.nodes[to].on_remote_update(stride_ms, now);
                    self.schedule_pulse(to, now);
                }
                Event::Pulse { node, generation } => {
                    if generation != self.nodes[node].generation() {
                        continue; // superseded by an update or haptics toggle
                    }
                    if self.nodes[node].fire_pulse(now).is_some() {
                        self.schedule_pulse(node, now);
                    }
                }
                Event::Stride { walker } => self.handle_stride(walker, now),
            }
        }
    }
}

/// Run any scenario from its config.
pub fn run(config: &ExperimentConfig) -> Result<TrialRecord, ScenarioError> {
    config.validate()?;
    let user_ids = config.user_ids();
    let haptics_on = config.phases.haptics_on_ms();
    let haptics_off = config.phases.haptics_off_ms();

    // Reference timeline for scheduler-driven scenarios, in absolute time.
    let reference = match config.kind {
        ScenarioKind::PrepConstant | ScenarioKind::ConstantRef => {
            constant_reference(config.profiles[0].baseline_ms, config.delta_pct)?
                .shifted(haptics_on)
        }
        ScenarioKind::ArtificialLeader => artificial_leader(
            splitmix(config.seed ^ 0x5EED_0000_0000_0001),
            config.phases.haptic_ms,
            config.update_interval_ms,
            config.reference_range_ms,
        )?
        .shifted(haptics_on),
        // Built from the stride record afterwards.
        ScenarioKind::HumanLeader | ScenarioKind::PeerToPeer => {
            ReferenceTimeline::new(Vec::new())?
        }
    };

    let mut walkers = Vec::new();
    let mut nodes = Vec::new();
    for (i, profile) in config.profiles.iter().enumerate() {
        let mut p = profile.clone();
        p.seed = p.seed ^ splitmix(config.seed.wrapping_add(i as u64 + 1));
        walkers.push(Walker::new(p)?);
        let mut node_cfg = NodeConfig::new(&user_ids[i])
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        node_cfg.haptics_enabled = false; // all quiet until the haptic phase
        nodes.push(NodeCore::new(node_cfg));
    }

    let n = walkers.len();
    let mut sim = Sim {
        kind: config.kind,
        phases: config.phases,
        latency_ms: config.network_latency_ms,
        user_ids: user_ids.clone(),
        walkers,
        nodes,
        strides: vec![Vec::new(); n],
        in_flight_ms: vec![0; n],
        last_sent: vec![None; n],
        reference,
        relay_records: Vec::new(),
        last_known: BTreeMap::new(),
        queue: BinaryHeap::new(),
        seq: 0,
    };

    sim.push(haptics_on, PRIO_HAPTICS_ON, Event::HapticsOn);
    sim.push(haptics_off, PRIO_HAPTICS_OFF, Event::HapticsOff);
    if config.kind == ScenarioKind::ArtificialLeader {
        let changes: Vec<(u64, u32)> = sim
            .reference
            .segments()
            .iter()
            .skip(1)
            .map(|&(start, d)| (start, d.round() as u32))
            .collect();
        for (start, period_ms) in changes {
            sim.push(start, PRIO_REF_CHANGE, Event::RefChange { period_ms });
        }
    }
    for i in 0..n {
        sim.begin_stride(i, 0);
    }
    sim.run();

    // Dyad scenarios derive the reference from the recorded strides.
    let reference = match config.kind {
        ScenarioKind::HumanLeader => stream_timeline(&sim.strides[0])?,
        ScenarioKind::PeerToPeer => midpoint_timeline(&sim.strides[0], &sim.strides[1])?,
        _ => sim.reference.clone(),
    };

    let mut meta: Vec<(String, String)> = vec![
        ("kind".into(), config.kind.name().into()),
        ("seed".into(), config.seed.to_string()),
        ("band_pct".into(), fmt(config.band_pct)),
        ("sustain".into(), config.sustain.to_string()),
        ("phase_baseline_ms".into(), config.phases.baseline_ms.to_string()),
        ("phase_haptic_ms".into(), config.phases.haptic_ms.to_string()),
        ("phase_post_ms".into(), config.phases.post_ms.to_string()),
        ("haptics_on_ms".into(), haptics_on.to_string()),
        ("haptics_off_ms".into(), haptics_off.to_string()),
        ("network_latency_ms".into(), config.network_latency_ms.to_string()),
        ("delta_pct".into(), fmt(config.delta_pct)),
        ("update_interval_ms".into(), config.update_interval_ms.to_string()),
        ("reference_lo_ms".into(), fmt(config.reference_range_ms.0)),
        ("reference_hi_ms".into(), fmt(config.reference_range_ms.1)),
        ("walkers".into(), user_ids.join(",")),
    ];
    for (i, profile) in config.profiles.iter().enumerate() {
        let id = &user_ids[i];
        let p = profile;
        for (key, value) in [
            ("baseline_ms", fmt(p.baseline_ms)),
            ("noise_sigma_pct", fmt(p.noise_sigma_pct)),
            ("gain_speedup", fmt(p.gain_speedup)),
            ("gain_slowdown", fmt(p.gain_slowdown)),
            ("noise_multiplier", fmt(p.noise_multiplier)),
            ("compliance", fmt(p.compliance)),
            ("drift_fraction", fmt(p.drift_fraction)),
            ("drift_persistence", fmt(p.drift_persistence)),
            ("seed", p.seed.to_string()),
        ] {
            meta.push((format!("walker.{id}.{key}"), value));
        }
    }

    let walkers = sim
        .strides
        .into_iter()
        .zip(sim.nodes)
        .enumerate()
        .map(|(i, (strides, node))| WalkerTrace {
            user_id: user_ids[i].clone(),
            profile: config.profiles[i].clone(),
            strides,
            pulses: node.pulses().to_vec(),
        })
        .collect();

    Ok(TrialRecord {
        kind: config.kind,
        seed: config.seed,
        phases: config.phases,
        band_pct: config.band_pct,
        sustain: config.sustain,
        haptics_on_ms: haptics_on,
        haptics_off_ms: haptics_off,
        reference,
        walkers,
        relay_log: sim.relay_records,
        meta,
    })
}

pub fn run_constant_ref(config: &ExperimentConfig) -> Result<TrialRecord, ScenarioError> {
    expect_kind(config, ScenarioKind::ConstantRef).or_else(|_| expect_kind(config, ScenarioKind::PrepConstant))?;
    run(config)
}

pub fn run_artificial_leader(config: &ExperimentConfig) -> Result<TrialRecord, ScenarioError> {
    expect_kind(config, ScenarioKind::ArtificialLeader)?;
    run(config)
}

pub fn run_human_leader(config: &ExperimentConfig) -> Result<TrialRecord, ScenarioError> {
    expect_kind(config, ScenarioKind::HumanLeader)?;
    run(config)
}

pub fn run_peer_to_peer(config: &ExperimentConfig) -> Result<TrialRecord, ScenarioError> {
    expect_kind(config, ScenarioKind::PeerToPeer)?;
    run(config)
}

fn expect_kind(config: &ExperimentConfig, kind: ScenarioKind) -> Result<(), ScenarioError> {
    if config.kind == kind {
        Ok(())
    } else {
        Err(ScenarioError::Config(format!(
            "expected {} config, got {}",
            kind.name(),
            config.kind.name()
        )))
    }
}

/// A stride stream as a piecewise-constant timeline: from each completion
/// on, the walker's "current cadence" is that stride's duration.
fn stream_timeline(strides: &[Stride]) -> Result<ReferenceTimeline, ScenarioError> {
    let mut segments: Vec<(u64, f64)> = Vec::with_capacity(strides.len());
    for s in strides {
        let t = s.end_ms as u64;
        match segments.last_mut() {
            Some(last) if last.0 == t => last.1 = s.duration_ms,
            _ => segments.push((t, s.duration_ms)),
        }
    }
    Ok(ReferenceTimeline::new(segments)?)
}

/// Midpoint of the two walkers' most recent strides over time, for plots of
/// the negotiated rhythm.
fn midpoint_timeline(a: &[Stride], b: &[Stride]) -> Result<ReferenceTimeline, ScenarioError> {
    let mut ia = 0;
    let mut ib = 0;
    let mut last_a: Option<f64> = None;
    let mut last_b: Option<f64> = None;
    let mut segments: Vec<(u64, f64)> = Vec::new();
    while ia < a.len() || ib < b.len() {
        let ta = a.get(ia).map_or(f64::INFINITY, |s| s.end_ms);
        let tb = b.get(ib).map_or(f64::INFINITY, |s| s.end_ms);
        let t;
        if ta <= tb {
            last_a = Some(a[ia].duration_ms);
            t = ta;
            ia += 1;
        } else {
            last_b = Some(b[ib].duration_ms);
            t = tb;
            ib += 1;
        }
        if let (Some(da), Some(db)) = (last_a, last_b) {
            let mid = (da + db) / 2.0;
            let t = t as u64;
            match segments.last_mut() {
                Some(last) if last.0 == t => last.1 = mid,
                _ => segments.push((t, mid)),
            }
        }
    }
    Ok(ReferenceTimeline::new(segments)?)
}

fn fmt(v: f64) -> String {
    crate::signal::fmt_ms(v)
}

/// Per-walker analysis of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkerMetrics {
    pub user_id: String,
    pub baseline_mean_ms: f64,
    pub baseline_std_ms: f64,
    pub haptic_mean_ms: f64,
    pub haptic_std_ms: f64,
    pub post_mean_ms: f64,
    pub post_std_ms: f64,
    /// Alignment percentage during the cued phase, from synchronization
    /// onset; None for walkers with no target (a leader).
    pub alignment_pct: Option<f64>,
    pub time_to_alignment_s: Option<f64>,
    pub cadence_variation_pct: f64,
    /// How many (autocorrelation-robust, pooled) standard errors the
    /// post-phase mean sits from the measured phase-1 baseline.
    pub recovery_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub walkers: Vec<WalkerMetrics>,
    /// Mutual alignment percentage for peer trials.
    pub peer_alignment_pct: Option<f64>,
}

/// Strides completing inside a half-open window.
pub fn strides_between(strides: &[Stride], from_ms: f64, to_ms: f64) -> Vec<Stride> {
    strides
        .iter()
        .filter(|s| s.end_ms > from_ms && s.end_ms <= to_ms)
        .cloned()
        .collect()
}

/// Inputs `analyze` needs; a live record provides them directly, and a
/// trial directory read back from disk provides the same view.
pub struct TrialView<'a> {
    pub kind: ScenarioKind,
    pub haptics_on_ms: u64,
    pub haptics_off_ms: u64,
    pub total_ms: u64,
    pub sustain: usize,
    pub reference: &'a ReferenceTimeline,
    /// (user_id, configured baseline, strides)
    pub walkers: Vec<(&'a str, f64, &'a [Stride])>,
}

impl TrialRecord {
    pub fn view(&self) -> TrialView<'_> {
        TrialView {
            kind: self.kind,
            haptics_on_ms: self.haptics_on_ms,
            haptics_off_ms: self.haptics_off_ms,
            total_ms: self.phases.total_ms(),
            sustain: self.sustain,
            reference: &self.reference,
            walkers: self
                .walkers
                .iter()
                .map(|w| (w.user_id.as_str(), w.profile.baseline_ms, w.strides.as_slice()))
                .collect(),
        }
    }
}

/// Compute the trial metrics table.
///
/// Alignment percentages follow the convention of the field analysis: they
/// cover the cued phase from synchronization onset (haptics-on plus the
/// time to alignment) to haptics-off, time-weighted by stride duration.
pub fn analyze(view: &TrialView, band_pct: f64) -> Result<TrialMetrics, ScenarioError> {
    let band = ToleranceBand::new(band_pct).map_err(|e| ScenarioError::Config(e.to_string()))?;
    let on = view.haptics_on_ms as f64;
    let off = view.haptics_off_ms as f64;
    let total = view.total_ms as f64;

    // Peer alignment is mutual and shared by the dyad.
    let mut peer_pct = None;
    let mut peer_tta = None;
    if view.kind == ScenarioKind::PeerToPeer && view.walkers.len() == 2 {
        let tta = peer_time_to_alignment(
            view.walkers[0].2,
            view.walkers[1].2,
            band,
            on,
            view.sustain,
        );
        let from = on + tta.unwrap_or(0.0) * 1000.0;
        let a = strides_between(view.walkers[0].2, from, off);
        let b = strides_between(view.walkers[1].2, from, off);
        if let Ok(out) = metrics::peer_alignment_series(&a, &b, band) {
            peer_pct = Some(out.percentage);
        }
        peer_tta = tta;
    }

    let mut rows = Vec::new();
    for (i, (user_id, _baseline_cfg, strides)) in view.walkers.iter().enumerate() {
        let phase1: Vec<f64> = strides_between(strides, 0.0, on)
            .iter()
            .map(|s| s.duration_ms)
            .collect();
        let phase2: Vec<f64> = strides_between(strides, on, off)
            .iter()
            .map(|s| s.duration_ms)
            .collect();
        let phase3: Vec<f64> = strides_between(strides, off, total)
            .iter()
            .map(|s| s.duration_ms)
            .collect();
        let b = metrics::baseline_stats(&phase1).map_err(config_err)?;
        let h = metrics::baseline_stats(&phase2).map_err(config_err)?;
        let p3 = metrics::baseline_stats(&phase3).map_err(config_err)?;

        let follows_reference = match view.kind {
            ScenarioKind::PeerToPeer => false,
            ScenarioKind::HumanLeader => i == 1,
            _ => i == 0,
        };
        let (alignment_pct, tta) = if follows_reference {
            let tta = metrics::time_to_alignment(
                strides,
                view.reference,
                band,
                on,
                view.sustain,
            )
            .ok();
            let from = on + tta.unwrap_or(0.0) * 1000.0;
            let window = strides_between(strides, on, off);
            let pct = metrics::alignment_percentage(
                &window,
                view.reference,
                band,
                from,
                Weighting::TimeWeighted,
            )
            .ok();
            (pct, tta)
        } else if view.kind == ScenarioKind::PeerToPeer {
            (peer_pct, peer_tta)
        } else {
            (None, None)
        };

        let recovery_z = metrics::mean_shift_z(&phase1, &phase3).map_err(config_err)?;

        rows.push(WalkerMetrics {
            user_id: user_id.to_string(),
            baseline_mean_ms: b.mean_ms,
            baseline_std_ms: b.std_ms,
            haptic_mean_ms: h.mean_ms,
            haptic_std_ms: h.std_ms,
            post_mean_ms: p3.mean_ms,
            post_std_ms: p3.std_ms,
            alignment_pct,
            time_to_alignment_s: tta,
            cadence_variation_pct: metrics::cadence_variation(b.mean_ms, h.mean_ms),
            recovery_z,
        });
    }
    Ok(TrialMetrics {
        walkers: rows,
        peer_alignment_pct: peer_pct,
    })
}

fn config_err(e: metrics::MetricsError) -> ScenarioError {
    ScenarioError::Config(e.to_string())
}

/// First time both peers hold mutual alignment for `sustain` strides each,
/// seconds from haptics-on.
pub fn peer_time_to_alignment(
    a: &[Stride],
    b: &[Stride],
    band: ToleranceBand,
    haptics_on_ms: f64,
    sustain: usize,
) -> Option<f64> {
    let fa = strides_after(a, haptics_on_ms);
    let fb = strides_after(b, haptics_on_ms);
    let out = metrics::peer_alignment_series(&fa, &fb, band).ok()?;
    let mut merged: Vec<(f64, bool)> = out
        .flags_a
        .iter()
        .chain(&out.flags_b)
        .map(|f| (f.end_ms, f.aligned))
        .collect();
    merged.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite times"));
    let need = sustain * 2;
    let mut run = 0usize;
    for (t, aligned) in merged {
        if aligned {
            run += 1;
            if run >= need {
                return Some((t - haptics_on_ms) / 1000.0);
            }
        } else {
            run = 0;
        }
    }
    None
}

fn strides_after(strides: &[Stride], from_ms: f64) -> Vec<Stride> {
    strides.iter().filter(|s| s.end_ms > from_ms).cloned().collect()
}
