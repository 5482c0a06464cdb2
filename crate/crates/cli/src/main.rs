//! Command line front end: seeded scenario simulations, live relay and
//! node processes, trial analysis, and pedometer packet tools.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
//! Diagnostics go to stderr; data goes to stdout or files.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stridelink_core::nikeplus;
use stridelink_core::node::{self, NodeConfig, NodeEvent, RunOptions, TcpTransport};
use stridelink_core::protocol::CadenceUpdate;
use stridelink_core::relay;
use stridelink_core::scenarios::{self, ExperimentConfig, PhasePlan, ScenarioKind};
use stridelink_core::signal::{self, PressureTrace, StridePipeline};
use stridelink_core::trial;
use stridelink_core::walker::WalkerProfile;

#[derive(Parser)]
#[command(name = "stridelink", version, about = "Remote social walking toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a seeded scenario simulation and write a trial directory.
    Sim(SimArgs),
    /// Serve one cadence-broadcast session.
    Relay(RelayArgs),
    /// Connect a walker node to a relay.
    Node(NodeArgs),
    /// Compute metrics for a recorded trial directory.
    Analyze(AnalyzeArgs),
    /// Pedometer packet tools.
    Nike(NikeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    /// Constant reference with optional secondary task load.
    Prep,
    /// Constant reference offset from baseline by --delta.
    Constant,
    /// Scripted leader re-drawn every --interval-ms.
    ArtificialLeader,
    /// One-way dyad: leader streams, follower entrains.
    HumanLeader,
    /// Mutual dyad with compliance blending.
    Peer,
}

impl Scenario {
    fn kind(self) -> ScenarioKind {
        match self {
            Scenario::Prep => ScenarioKind::PrepConstant,
            Scenario::Constant => ScenarioKind::ConstantRef,
            Scenario::ArtificialLeader => ScenarioKind::ArtificialLeader,
            Scenario::HumanLeader => ScenarioKind::HumanLeader,
            Scenario::Peer => ScenarioKind::PeerToPeer,
        }
    }
}

#[derive(Args)]
struct SimArgs {
    #[arg(value_enum)]
    scenario: Scenario,
    /// Key = value scenario config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Walker profile file, once per walker.
    #[arg(long = "profile")]
    profiles: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output trial directory.
    #[arg(long, default_value = "trial")]
    out: PathBuf,
    /// Constant-reference offset, percent of baseline.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Analysis tolerance band, percent.
    #[arg(long)]
    band: Option<f64>,
    /// Leader re-draw interval for artificial-leader runs, ms.
    #[arg(long)]
    interval_ms: Option<u64>,
    /// Injected one-way network delay, ms.
    #[arg(long)]
    latency_ms: Option<u64>,
    /// Phase lengths as baseline,haptic,post in ms.
    #[arg(long)]
    phases: Option<String>,
    /// Double the walkers' noise (models a concurrent mental task).
    #[arg(long, default_value_t = false)]
    secondary_task: bool,
}

#[derive(Args)]
struct RelayArgs {
    /// Listen address, host:port (port 0 picks one).
    #[arg(long)]
    listen: String,
    /// Number of walkers in the session.
    #[arg(long)]
    clients: usize,
    /// Session log path.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Give up if the session has not drained after this long.
    #[arg(long, default_value_t = 600_000)]
    timeout_ms: u64,
}

#[derive(Args)]
struct NodeArgs {
    /// User id announced to the relay.
    #[arg(long)]
    id: String,
    /// Relay address, host:port.
    #[arg(long)]
    relay: String,
    /// Disable vibration output (forwarding still runs).
    #[arg(long, default_value_t = false)]
    no_haptics: bool,
    /// Replay a recorded pressure trace as the local update source.
    #[arg(long)]
    pressure_csv: Option<PathBuf>,
    /// Keep servicing remote traffic this long after local updates end, ms.
    #[arg(long, default_value_t = 300)]
    linger_ms: u64,
    /// Hard runtime cap, ms.
    #[arg(long, default_value_t = 60_000)]
    max_runtime_ms: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    trial_dir: PathBuf,
    /// Tolerance band, percent.
    #[arg(long)]
    band: Option<f64>,
    /// Consecutive in-band strides required for alignment.
    #[arg(long)]
    sustain: Option<usize>,
}

#[derive(Args)]
struct NikeArgs {
    #[command(subcommand)]
    cmd: NikeCmd,
}

#[derive(Subcommand)]
enum NikeCmd {
    /// Decode 34-byte packets from a whitespace-separated hex file.
    Decode {
        hexfile: PathBuf,
        /// Checksum convention of the capture.
        #[arg(long, value_enum, default_value_t = Checksum::Twos)]
        convention: Checksum,
        /// Keep only packets with this serial.
        #[arg(long)]
        serial: Option<u32>,
    },
    /// Steps-per-minute series from a cumulative step-count CSV.
    Cadence {
        csv: PathBuf,
        /// Moving-average window, seconds.
        #[arg(long, default_value_t = 5.0)]
        window_s: f64,
        /// Keep only readings with this serial.
        #[arg(long)]
        serial: Option<u32>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Checksum {
    /// Sum plus checksum is 0 modulo 256 (packets this tool encodes).
    Twos,
    /// Sum plus checksum is 0xFF (captures from real pods).
    Ones,
}

impl Checksum {
    fn convention(self) -> nikeplus::Convention {
        match self {
            Checksum::Twos => nikeplus::Convention::TwosComplement,
            Checksum::Ones => nikeplus::Convention::OnesComplement,
        }
    }
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Sim(args) => cmd_sim(args),
        Cmd::Relay(args) => cmd_relay(args),
        Cmd::Node(args) => cmd_node(args),
        Cmd::Analyze(args) => cmd_analyze(args),
        Cmd::Nike(args) => match args.cmd {
            NikeCmd::Decode {
                hexfile,
                convention,
                serial,
            } => cmd_nike_decode(&hexfile, convention.convention(), serial),
            NikeCmd::Cadence {
                csv,
                window_s,
                serial,
            } => cmd_nike_cadence(&csv, window_s, serial),
        },
    }
}

fn parse_phases(text: &str) -> Result<PhasePlan, CliError> {
    let parts: Vec<u64> = text
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("bad --phases `{text}`, want b,h,p in ms")))?;
    if parts.len() != 3 {
        return Err(CliError::Config("--phases wants three comma-separated values".into()));
    }
    Ok(PhasePlan {
        baseline_ms: parts[0],
        haptic_ms: parts[1],
        post_ms: parts[2],
    })
}

fn apply_config_file(cfg: &mut ExperimentConfig, path: &PathBuf) -> Result<(), CliError> {
    let text = fs::read_to_string(path).map_err(config_err)?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("{}:{}: expected key = value", path.display(), idx + 1)))?;
        let key = key.trim();
        let value = value.trim();
        let bad = || CliError::Config(format!("{}:{}: bad value for {key}", path.display(), idx + 1));
        match key {
            "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
            "band_pct" => cfg.band_pct = value.parse().map_err(|_| bad())?,
            "sustain" => cfg.sustain = value.parse().map_err(|_| bad())?,
            "delta_pct" => cfg.delta_pct = value.parse().map_err(|_| bad())?,
            "update_interval_ms" => cfg.update_interval_ms = value.parse().map_err(|_| bad())?,
            "network_latency_ms" => cfg.network_latency_ms = value.parse().map_err(|_| bad())?,
            "phase_baseline_ms" => cfg.phases.baseline_ms = value.parse().map_err(|_| bad())?,
            "phase_haptic_ms" => cfg.phases.haptic_ms = value.parse().map_err(|_| bad())?,
            "phase_post_ms" => cfg.phases.post_ms = value.parse().map_err(|_| bad())?,
            other => {
                return Err(CliError::Config(format!(
                    "{}:{}: unknown key `{other}`",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }
    Ok(())
}

fn cmd_sim(args: SimArgs) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::new(args.scenario.kind());
    if let Some(path) = &args.config {
        apply_config_file(&mut cfg, path)?;
    }
    cfg.seed = args.seed;
    if let Some(d) = args.delta {
        cfg.delta_pct = d;
    }
    if let Some(b) = args.band {
        cfg.band_pct = b;
    }
    if let Some(i) = args.interval_ms {
        cfg.update_interval_ms = i;
    }
    if let Some(l) = args.latency_ms {
        cfg.network_latency_ms = l;
    }
    if let Some(p) = &args.phases {
        cfg.phases = parse_phases(p)?;
    }
    if !args.profiles.is_empty() {
        if args.profiles.len() != cfg.kind.walker_count() {
            return Err(CliError::Config(format!(
                "scenario wants {} profile(s), got {}",
                cfg.kind.walker_count(),
                args.profiles.len()
            )));
        }
        cfg.profiles = args
            .profiles
            .iter()
            .map(|p| {
                let text = fs::read_to_string(p).map_err(config_err)?;
                WalkerProfile::from_config_str(&text).map_err(config_err)
            })
            .collect::<Result<_, _>>()?;
    }
    if args.secondary_task {
        for p in &mut cfg.profiles {
            p.noise_multiplier *= 2.0;
        }
    }

    let record = scenarios::run(&cfg).map_err(config_err)?;
    trial::write_trial_dir(&record, &args.out).map_err(runtime_err)?;

    let view = record.view();
    let metrics = scenarios::analyze(&view, record.band_pct).map_err(runtime_err)?;
    let csv = trial::metrics_csv(&metrics);
    fs::write(args.out.join("metrics.csv"), &csv).map_err(runtime_err)?;
    trial::write_flags_csv(&view, record.band_pct, &args.out).map_err(runtime_err)?;
    print!("{csv}");
    eprintln!(
        "wrote {} ({} walkers, {} log records)",
        args.out.display(),
        record.walkers.len(),
        record.relay_log.len()
    );
    Ok(())
}

fn cmd_relay(args: RelayArgs) -> Result<(), CliError> {
    let handle = relay::start_session(&args.listen, args.clients, args.log.clone())
        .map_err(|e| match e {
            relay::RelayError::TooFewClients(_) => config_err(e),
            other => runtime_err(other),
        })?;
    println!("listening {} clients {}", handle.local_addr(), args.clients);
    let summary = handle.join(Duration::from_millis(args.timeout_ms));
    eprintln!(
        "session done: {} records, {} dropped",
        summary.records.len(),
        summary.dropped_updates
    );
    Ok(())
}

fn cmd_node(args: NodeArgs) -> Result<(), CliError> {
    let mut config = NodeConfig::new(&args.id).map_err(config_err)?;
    config.haptics_enabled = !args.no_haptics;

    let updates: Vec<CadenceUpdate> = match &args.pressure_csv {
        Some(path) => {
            let trace = PressureTrace::read_csv(path).map_err(config_err)?;
            let events = StridePipeline::default().extract(&trace).map_err(config_err)?;
            signal::emit_cadence_updates(&events)
                .iter()
                .map(|ev| {
                    CadenceUpdate::new(
                        &args.id,
                        ev.duration_ms.expect("updates carry durations").round() as u32,
                        ev.time_ms.round() as u64,
                    )
                    .map_err(config_err)
                })
                .collect::<Result<_, _>>()?
        }
        None => Vec::new(),
    };

    let mut transport = TcpTransport::connect(&args.relay).map_err(runtime_err)?;
    let options = RunOptions {
        linger_ms: args.linger_ms,
        max_runtime_ms: args.max_runtime_ms,
    };
    node::run_node(config, &mut transport, &updates, options, |event| match event {
        NodeEvent::Started { clients } => eprintln!("session started with {clients} walkers"),
        NodeEvent::Pulse(p) => println!("PULSE {} {} {}", p.start_ms, p.side, p.duration_ms),
        NodeEvent::Remote(u) => println!("REMOTE {} {} {}", u.user_id, u.stride_ms, u.sender_ts_ms),
        NodeEvent::PeerLost(id) => eprintln!("peer lost: {id}"),
    })
    .map_err(runtime_err)?;
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let dir = trial::read_trial_dir(&args.trial_dir).map_err(config_err)?;
    let mut view = dir.view().map_err(config_err)?;
    if let Some(s) = args.sustain {
        view.sustain = s;
    }
    let band = args.band.unwrap_or_else(|| dir.band_pct());
    let metrics = scenarios::analyze(&view, band).map_err(runtime_err)?;
    let csv = trial::metrics_csv(&metrics);
    fs::write(args.trial_dir.join("metrics.csv"), &csv).map_err(runtime_err)?;
    trial::write_flags_csv(&view, band, &args.trial_dir).map_err(runtime_err)?;
    print!("{csv}");
    Ok(())
}

fn cmd_nike_decode(
    hexfile: &PathBuf,
    convention: nikeplus::Convention,
    serial: Option<u32>,
) -> Result<(), CliError> {
    let text = fs::read_to_string(hexfile).map_err(config_err)?;
    let bytes = nikeplus::parse_hex_bytes(&text).map_err(config_err)?;
    if bytes.is_empty() || bytes.len() % nikeplus::PACKET_LEN != 0 {
        return Err(CliError::Config(format!(
            "expected a multiple of {} bytes, got {}",
            nikeplus::PACKET_LEN,
            bytes.len()
        )));
    }
    let mut out = String::from("index,serial,cumulative_steps\n");
    let mut bad = 0usize;
    let mut packets = Vec::new();
    for (idx, chunk) in bytes.chunks(nikeplus::PACKET_LEN).enumerate() {
        match nikeplus::parse_packet(chunk, convention) {
            Ok(p) => packets.push((idx, p)),
            Err(e) => {
                bad += 1;
                eprintln!("packet {idx}: {e}");
            }
        }
    }
    for (idx, p) in &packets {
        if serial.is_some_and(|s| s != p.serial()) {
            continue;
        }
        let _ = writeln!(out, "{},{},{}", idx, p.serial(), p.cumulative_steps());
    }
    print!("{out}");
    if bad > 0 {
        return Err(CliError::Runtime(format!("{bad} invalid packet(s)")));
    }
    Ok(())
}

fn cmd_nike_cadence(csv: &PathBuf, window_s: f64, serial: Option<u32>) -> Result<(), CliError> {
    let text = fs::read_to_string(csv).map_err(config_err)?;
    let mut readings = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = || CliError::Config(format!("{}:{}: bad reading", csv.display(), idx + 1));
        let mut cols = line.split(',');
        let rx_time_s: f64 = cols.next().and_then(|c| c.trim().parse().ok()).ok_or_else(bad)?;
        let s: u32 = cols.next().and_then(|c| c.trim().parse().ok()).ok_or_else(bad)?;
        let steps: u32 = cols.next().and_then(|c| c.trim().parse().ok()).ok_or_else(bad)?;
        readings.push(nikeplus::StepReading {
            serial: s,
            cumulative_steps: steps,
            rx_time_s,
        });
    }
    if let Some(s) = serial {
        readings.retain(|r| r.serial == s);
    }
    let readings = nikeplus::dedup_readings(&readings);
    let rates = nikeplus::cadence_from_steps(&readings, window_s).map_err(runtime_err)?;
    let mut out = String::from("rx_time_s,steps_per_min\n");
    for (r, rate) in readings.iter().zip(&rates) {
        let _ = writeln!(out, "{},{rate}", r.rx_time_s);
    }
    print!("{out}");
    Ok(())
}
