//! Simulated walker with sensorimotor entrainment.
//!
//! A walker produces one stride duration at a time. Self-paced walking
//! wanders around a personal baseline with physiological variability; under
//! a perceived vibration rhythm the walker pulls its intended cadence
//! toward the target, with separate gains for speeding up (shorter strides,
//! fast) and slowing down (longer strides, sluggish).
//!
//! Variability model: the spread of self-paced stride durations is split
//! into a slowly wandering drift of the intended cadence (first-order
//! autoregressive, matching the long-range correlation of natural walking)
//! and fast per-stride jitter. When entrained the pull replaces the drift,
//! so a cued walker is steadier than a self-paced one at equal total
//! variability. Both components come from one seeded generator, so a walker
//! is a deterministic function of its profile and input event order.
//!
//! The module also builds reference timelines for experiments and
//! synthesizes heel-pressure traces for pipeline tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::scheduler::VibrationPulse;
use crate::signal::PressureTrace;

/// Physical range of plausible stride durations, milliseconds.
pub const STRIDE_MIN_MS: f64 = 600.0;
pub const STRIDE_MAX_MS: f64 = 1600.0;

#[derive(Debug, Error, PartialEq)]
pub enum WalkerError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("need at least two pulses on the same side to estimate a period")]
    InsufficientPulses,
    #[error("stride duration {0} ms outside [{STRIDE_MIN_MS}, {STRIDE_MAX_MS}]")]
    OutOfRange(f64),
    #[error("config line {line}: {reason}")]
    BadConfig { line: usize, reason: String },
}

/// Behavioral parameters of one simulated walker.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkerProfile {
    /// Comfortable self-paced stride duration, ms.
    pub baseline_ms: f64,
    /// Self-paced stride variability as percent of baseline.
    pub noise_sigma_pct: f64,
    /// Per-stride pull toward a faster target (target shorter than current).
    pub gain_speedup: f64,
    /// Per-stride pull toward a slower target.
    pub gain_slowdown: f64,
    /// Noise scale factor; above 1 models secondary-task load.
    pub noise_multiplier: f64,
    /// Peer-to-peer blending: weight of the partner's rhythm against the
    /// own baseline when both goals are pursued at once.
    pub compliance: f64,
    /// Share of noise variance carried by the slow drift component.
    pub drift_fraction: f64,
    /// Autoregressive coefficient of the drift, per stride.
    pub drift_persistence: f64,
    pub seed: u64,
}

impl Default for WalkerProfile {
    fn default() -> Self {
        Self {
            baseline_ms: 1138.0,
            noise_sigma_pct: 1.93,
            gain_speedup: 0.95,
            gain_slowdown: 0.28,
            noise_multiplier: 1.0,
            compliance: 0.5,
            drift_fraction: 0.8,
            drift_persistence: 0.72,
            seed: 0,
        }
    }
}

impl WalkerProfile {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_baseline(mut self, baseline_ms: f64) -> Self {
        self.baseline_ms = baseline_ms;
        self
    }

    fn validate(&self) -> Result<(), WalkerError> {
        let bad = |m: String| Err(WalkerError::InvalidProfile(m));
        if !(STRIDE_MIN_MS..=STRIDE_MAX_MS).contains(&self.baseline_ms) {
            return bad(format!("baseline_ms {} out of range", self.baseline_ms));
        }
        if !(0.0..=1.0).contains(&self.gain_speedup) || !(0.0..=1.0).contains(&self.gain_slowdown)
        {
            return bad("gains must lie in [0,1]".into());
        }
        if self.noise_sigma_pct < 0.0 || self.noise_multiplier < 0.0 {
            return bad("noise parameters must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.compliance) {
            return bad("compliance must lie in [0,1]".into());
        }
        if !(0.0..=1.0).contains(&self.drift_fraction)
            || !(0.0..1.0).contains(&self.drift_persistence)
        {
            return bad("drift parameters out of range".into());
        }
        Ok(())
    }

    /// Parse a flat `key = value` profile file. Unknown keys are rejected.
    pub fn from_config_str(text: &str) -> Result<Self, WalkerError> {
        let mut p = WalkerProfile::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: &str| WalkerError::BadConfig {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
            let key = key.trim();
            let value = value.trim();
            let num = || -> Result<f64, WalkerError> {
                value.parse().map_err(|_| err("expected a number"))
            };
            match key {
                "baseline_ms" => p.baseline_ms = num()?,
                "noise_sigma_pct" => p.noise_sigma_pct = num()?,
                "gain_speedup" => p.gain_speedup = num()?,
                "gain_slowdown" => p.gain_slowdown = num()?,
                "noise_multiplier" => p.noise_multiplier = num()?,
                "compliance" => p.compliance = num()?,
                "drift_fraction" => p.drift_fraction = num()?,
                "drift_persistence" => p.drift_persistence = num()?,
                "seed" => {
                    p.seed = value.parse().map_err(|_| err("expected an integer seed"))?
                }
                other => return Err(err(&format!("unknown key `{other}`"))),
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "baseline_ms = {}\nnoise_sigma_pct = {}\ngain_speedup = {}\ngain_slowdown = {}\n\
             noise_multiplier = {}\ncompliance = {}\ndrift_fraction = {}\ndrift_persistence = {}\nseed = {}\n",
            self.baseline_ms,
            self.noise_sigma_pct,
            self.gain_speedup,
            self.gain_slowdown,
            self.noise_multiplier,
            self.compliance,
            self.drift_fraction,
            self.drift_persistence,
            self.seed,
        )
    }
}

/// One simulated walker. Single-owner; deterministic given profile and the
/// order of `next_stride` calls.
#[derive(Debug, Clone)]
pub struct Walker {
    profile: WalkerProfile,
    /// Intended cadence before per-stride jitter.
    anchor_ms: f64,
    /// Slow wandering of the comfortable cadence.
    drift_ms: f64,
    rng: ChaCha8Rng,
}

impl Walker {
    pub fn new(profile: WalkerProfile) -> Result<Self, WalkerError> {
        profile.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
        // Start the drift at a stationary draw so trials have no warm-up bias.
        let drift = if profile.drift_sigma_ms() > 0.0 {
            Normal::new(0.0, profile.drift_sigma_ms())
                .unwrap()
                .sample(&mut rng)
        } else {
            0.0
        };
        Ok(Self {
            anchor_ms: profile.baseline_ms + drift,
            drift_ms: drift,
            profile,
            rng,
        })
    }

    pub fn profile(&self) -> &WalkerProfile {
        &self.profile
    }

    pub fn baseline_ms(&self) -> f64 {
        self.profile.baseline_ms
    }

    /// Produce the next stride duration.
    ///
    /// With a perceived target the intended cadence moves by the
    /// directional gain toward it; without one it relaxes to the baseline
    /// plus the current drift. The emitted stride adds fast jitter and is
    /// clamped to the physical range.
    pub fn next_stride(&mut self, perceived_target_ms: Option<f64>) -> f64 {
        let p = &self.profile;
        let drift_sigma = p.drift_sigma_ms();
        if drift_sigma > 0.0 {
            let rho = p.drift_persistence;
            let innovation_sigma = drift_sigma * (1.0 - rho * rho).sqrt();
            self.drift_ms = rho * self.drift_ms
                + Normal::new(0.0, innovation_sigma).unwrap().sample(&mut self.rng);
        }
        match perceived_target_ms {
            Some(target) => {
                let gain = if target < self.anchor_ms {
                    p.gain_speedup
                } else {
                    p.gain_slowdown
                };
                self.anchor_ms += gain * (target - self.anchor_ms);
            }
            None => {
                self.anchor_ms = p.baseline_ms + self.drift_ms;
            }
        }
        let jitter_sigma = p.jitter_sigma_ms();
        let jitter = if jitter_sigma > 0.0 {
            Normal::new(0.0, jitter_sigma).unwrap().sample(&mut self.rng)
        } else {
            0.0
        };
        (self.anchor_ms + jitter).clamp(STRIDE_MIN_MS, STRIDE_MAX_MS)
    }
}

impl WalkerProfile {
    /// Total self-paced stride standard deviation, ms.
    pub fn noise_sigma_ms(&self) -> f64 {
        self.noise_sigma_pct / 100.0 * self.noise_multiplier * self.baseline_ms
    }

    fn drift_sigma_ms(&self) -> f64 {
        self.noise_sigma_ms() * self.drift_fraction.sqrt()
    }

    fn jitter_sigma_ms(&self) -> f64 {
        self.noise_sigma_ms() * (1.0 - self.drift_fraction).sqrt()
    }
}

/// Period estimate from the two most recent pulses that share a side.
///
/// Opposite ankles fire half a period apart, so a same-side pair spans one
/// full period.
pub fn perceive_pulses(pulses: &[VibrationPulse]) -> Result<f64, WalkerError> {
    // Pairs further from the end can only close earlier, so the first hit
    // scanning backwards is the most recent same-side pair.
    for (i, p) in pulses.iter().enumerate().rev() {
        if let Some(prev) = pulses[..i].iter().rev().find(|q| q.side == p.side) {
            return Ok((p.start_ms - prev.start_ms) as f64);
        }
    }
    Err(WalkerError::InsufficientPulses)
}

/// Piecewise-constant target stride duration over a session.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTimeline {
    /// (start_ms, stride_duration_ms), start times strictly increasing.
    segments: Vec<(u64, f64)>,
}

impl ReferenceTimeline {
    pub fn new(segments: Vec<(u64, f64)>) -> Result<Self, WalkerError> {
        for pair in segments.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(WalkerError::InvalidProfile(
                    "segment start times must strictly increase".into(),
                ));
            }
        }
        if let Some(&(_, d)) = segments
            .iter()
            .find(|(_, d)| !(STRIDE_MIN_MS..=STRIDE_MAX_MS).contains(d))
        {
            return Err(WalkerError::OutOfRange(d));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[(u64, f64)] {
        &self.segments
    }

    /// Target at time `t_ms`; None before the first segment.
    pub fn value_at(&self, t_ms: u64) -> Option<f64> {
        self.segments
            .iter()
            .take_while(|(start, _)| *start <= t_ms)
            .last()
            .map(|(_, d)| *d)
    }

    /// Same timeline shifted right by `offset_ms`.
    pub fn shifted(&self, offset_ms: u64) -> ReferenceTimeline {
        ReferenceTimeline {
            segments: self
                .segments
                .iter()
                .map(|(s, d)| (s + offset_ms, *d))
                .collect(),
        }
    }
}

/// Random piecewise-constant leader rhythm: a fresh target drawn uniformly
/// from `range_ms` every `update_interval_ms`.
pub fn artificial_leader(
    seed: u64,
    session_length_ms: u64,
    update_interval_ms: u64,
    range_ms: (f64, f64),
) -> Result<ReferenceTimeline, WalkerError> {
    let (lo, hi) = range_ms;
    if !(STRIDE_MIN_MS..=STRIDE_MAX_MS).contains(&lo)
        || !(STRIDE_MIN_MS..=STRIDE_MAX_MS).contains(&hi)
        || hi < lo
    {
        return Err(WalkerError::OutOfRange(if hi < lo { hi } else { lo }));
    }
    if update_interval_ms == 0 || session_length_ms == 0 {
        return Err(WalkerError::InvalidProfile(
            "session and interval must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::new();
    let mut t = 0u64;
    while t < session_length_ms {
        // Whole-millisecond targets keep logs and CSVs exact.
        let d = rng.gen_range(lo.round() as i64..=hi.round() as i64) as f64;
        segments.push((t, d));
        t += update_interval_ms;
    }
    ReferenceTimeline::new(segments)
}

/// Single constant target offset from a baseline by `delta_pct` percent.
pub fn constant_reference(baseline_ms: f64, delta_pct: f64) -> Result<ReferenceTimeline, WalkerError> {
    let d = baseline_ms * (1.0 + delta_pct / 100.0);
    if !(STRIDE_MIN_MS..=STRIDE_MAX_MS).contains(&d) {
        return Err(WalkerError::OutOfRange(d));
    }
    ReferenceTimeline::new(vec![(0, d)])
}

/// Heel-pressure synthesis for pipeline tests.
///
/// Each stride contributes a stance-phase plateau followed by a swing-phase
/// trough. The optional silent lead-in gives the first heel strike a rising
/// edge, and the closing mark ends the last stride so its duration is
/// measurable; both default on.
#[derive(Debug, Clone)]
pub struct PressureSynth {
    pub stance_ratio: f64,
    pub high_level: f64,
    pub low_level: f64,
    pub noise_sigma: f64,
    pub lead_in_ms: f64,
    pub closing_mark_ms: f64,
    pub seed: u64,
}

impl Default for PressureSynth {
    fn default() -> Self {
        // Noise is kept small relative to the contact level: the detection
        // threshold is an absolute two-sigma level, and for stance shares
        // near one half it rises to within a few percent of the plateau.
        // Larger amplitude noise flickers the binarized onset and shifts
        // detected edges by whole samples.
        Self {
            stance_ratio: 0.6,
            high_level: 0.9,
            low_level: 0.05,
            noise_sigma: 0.008,
            lead_in_ms: 500.0,
            closing_mark_ms: 200.0,
            seed: 0,
        }
    }
}

impl PressureSynth {
    pub fn generate(&self, stride_durations_ms: &[f64], sample_rate_hz: f64) -> PressureTrace {
        assert!(
            self.stance_ratio > 0.0 && self.stance_ratio < 1.0,
            "stance ratio must lie in (0,1)"
        );
        let mut onsets = Vec::with_capacity(stride_durations_ms.len() + 1);
        let mut t = self.lead_in_ms;
        for d in stride_durations_ms {
            onsets.push((t, self.stance_ratio * d));
            t += d;
        }
        if self.closing_mark_ms > 0.0 {
            onsets.push((t, self.closing_mark_ms));
            t += self.closing_mark_ms;
        }
        let total_ms = t;
        let n = ((total_ms / 1000.0) * sample_rate_hz).floor() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = if self.noise_sigma > 0.0 {
            Some(Normal::new(0.0, self.noise_sigma).unwrap())
        } else {
            None
        };
        let period = 1000.0 / sample_rate_hz;
        let mut onset_idx = 0usize;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 * period;
                while onset_idx + 1 < onsets.len() && onsets[onset_idx + 1].0 <= t {
                    onset_idx += 1;
                }
                let (start, stance) = onsets[onset_idx];
                let high = t >= start && t < start + stance;
                let base = if high { self.high_level } else { self.low_level };
                let v = base + noise.map_or(0.0, |d| d.sample(&mut rng));
                v.clamp(0.0, 1.0)
            })
            .collect();
        PressureTrace::new(samples, sample_rate_hz).expect("valid synthesized trace")
    }
}

/// Bare synthesis without lead-in or closing mark: exactly the stance/swing
/// pattern of the given strides.
pub fn generate_pressure(
    stride_durations_ms: &[f64],
    stance_ratio: f64,
    sample_rate_hz: f64,
) -> PressureTrace {
    PressureSynth {
        stance_ratio,
        lead_in_ms: 0.0,
        closing_mark_ms: 0.0,
        ..PressureSynth::default()
    }
    .generate(stride_durations_ms, sample_rate_hz)
}
