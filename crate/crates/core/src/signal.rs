//! Stride extraction from heel-pressure traces.
//!
//! The sensing anklet samples the pressure under the heel at a fixed rate.
//! The pipeline mirrors the firmware: normalize the raw signal, derive a
//! detection threshold from a calibration window (twice the population
//! standard deviation), binarize into a contact square wave, debounce runs
//! that are too short to be real stance or swing phases, then read heel
//! strikes off the positive edges. Stride duration is the interval between
//! consecutive positive edges.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("empty trace")]
    EmptyTrace,
    #[error("sample rate must be positive, got {0}")]
    BadSampleRate(f64),
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("flat trace: zero variance, cannot calibrate")]
    ZeroVariance,
    #[error("threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("{path}:{line}: {reason}")]
    MalformedCsv {
        path: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sampled heel-pressure signal, normalized to the unit range.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureTrace {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl PressureTrace {
    pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;

    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self, SignalError> {
        if !(sample_rate_hz > 0.0) {
            return Err(SignalError::BadSampleRate(sample_rate_hz));
        }
        if let Some(idx) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::NonFiniteSample(idx));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Milliseconds covered by one sample.
    pub fn sample_period_ms(&self) -> f64 {
        1000.0 / self.sample_rate_hz
    }

    /// Slice covering the first `window_ms` of the trace (at least one sample).
    pub fn prefix_ms(&self, window_ms: f64) -> &[f64] {
        let n = ((window_ms / 1000.0) * self.sample_rate_hz).floor() as usize;
        let n = n.clamp(1, self.samples.len());
        &self.samples[..n]
    }

    /// Min-max normalize against the affine map of a calibration window.
    ///
    /// The window is mapped onto [0,1]; the same map is applied to the rest
    /// of the trace and the result is clamped, so later samples above the
    /// calibration maximum saturate at 1.
    pub fn normalized(&self, calibration_window_ms: f64) -> Result<PressureTrace, SignalError> {
        if self.samples.is_empty() {
            return Err(SignalError::EmptyTrace);
        }
        let window = self.prefix_ms(calibration_window_ms);
        let min = window.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max <= min {
            return Err(SignalError::ZeroVariance);
        }
        let scale = 1.0 / (max - min);
        let samples = self
            .samples
            .iter()
            .map(|s| ((s - min) * scale).clamp(0.0, 1.0))
            .collect();
        Ok(PressureTrace {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    /// Read a two-column `time_ms,pressure` CSV with a header row.
    ///
    /// The sample rate is inferred from the spacing of the first two rows.
    pub fn read_csv(path: &Path) -> Result<Self, SignalError> {
        let text = fs::read_to_string(path)?;
        let err = |line: usize, reason: &str| SignalError::MalformedCsv {
            path: path.display().to_string(),
            line,
            reason: reason.to_string(),
        };
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (idx, row) in text.lines().enumerate() {
            if idx == 0 {
                continue; // header
            }
            if row.trim().is_empty() {
                continue;
            }
            let mut cols = row.split(',');
            let t: f64 = cols
                .next()
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| err(idx + 1, "bad time_ms"))?;
            let p: f64 = cols
                .next()
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| err(idx + 1, "bad pressure"))?;
            times.push(t);
            samples.push(p);
        }
        if samples.is_empty() {
            return Err(SignalError::EmptyTrace);
        }
        let rate = if times.len() >= 2 && times[1] > times[0] {
            1000.0 / (times[1] - times[0])
        } else {
            Self::DEFAULT_SAMPLE_RATE_HZ
        };
        PressureTrace::new(samples, rate)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), SignalError> {
        let mut out = String::from("time_ms,pressure\n");
        let period = self.sample_period_ms();
        for (i, s) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "{},{}", fmt_ms(i as f64 * period), s);
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Contact detection threshold in normalized pressure units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(value: f64) -> Result<Self, SignalError> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(SignalError::BadThreshold(value));
        }
        Ok(Self(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Two-level contact signal derived from a pressure trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareWave {
    levels: Vec<u8>,
    sample_rate_hz: f64,
}

impl SquareWave {
    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// One detected heel strike.
///
/// The first event of a trace carries no duration: a stride needs two
/// consecutive strikes to be measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrideEvent {
    /// Milliseconds since trace start.
    pub time_ms: f64,
    /// Interval since the previous heel strike, absent for the first event.
    pub duration_ms: Option<f64>,
}

/// Threshold from a calibration trace: twice the population standard
/// deviation of the samples.
pub fn calibrate(trace: &PressureTrace) -> Result<Threshold, SignalError> {
    if trace.is_empty() {
        return Err(SignalError::EmptyTrace);
    }
    let n = trace.samples.len() as f64;
    let mean = trace.samples.iter().sum::<f64>() / n;
    let var = trace
        .samples
        .iter()
        .map(|s| {
            let d = s - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Err(SignalError::ZeroVariance);
    }
    Threshold::new(2.0 * std)
}

/// Binarize: level 1 wherever the sample is at or above the threshold.
pub fn binarize(trace: &PressureTrace, threshold: Threshold) -> SquareWave {
    let levels = trace
        .samples
        .iter()
        .map(|s| u8::from(*s >= threshold.value()))
        .collect();
    SquareWave {
        levels,
        sample_rate_hz: trace.sample_rate_hz,
    }
}

/// Reject level runs shorter than `min_phase_ms`.
///
/// Short runs merge into the preceding run. Leading short runs are absorbed
/// by the first run of sufficient length, so the output keeps the input
/// length and sample alignment. If no run is long enough the wave collapses
/// to constant 0 (no usable contacts).
pub fn debounce(wave: &SquareWave, min_phase_ms: f64) -> SquareWave {
    let min_len = ((min_phase_ms / 1000.0) * wave.sample_rate_hz).ceil() as usize;
    if min_len <= 1 || wave.levels.is_empty() {
        return wave.clone();
    }

    // (level, len) runs; absorbing a short run coalesces its neighbours.
    let mut runs: Vec<(u8, usize)> = Vec::new();
    let mut pending_prefix = 0usize;
    let mut i = 0;
    while i < wave.levels.len() {
        let level = wave.levels[i];
        let mut j = i;
        while j < wave.levels.len() && wave.levels[j] == level {
            j += 1;
        }
        let len = j - i;
        i = j;
        if let Some(top) = runs.last_mut() {
            if top.0 == level {
                top.1 += len;
            } else if len < min_len {
                top.1 += len;
            } else {
                runs.push((level, len));
            }
        } else if len < min_len {
            pending_prefix += len;
        } else {
            runs.push((level, len + pending_prefix));
            pending_prefix = 0;
        }
    }

    let mut levels = Vec::with_capacity(wave.levels.len());
    if runs.is_empty() {
        levels.resize(wave.levels.len(), 0);
    } else {
        for (level, len) in runs {
            levels.resize(levels.len() + len, level);
        }
    }
    debug_assert_eq!(levels.len(), wave.levels.len());
    SquareWave {
        levels,
        sample_rate_hz: wave.sample_rate_hz,
    }
}

/// Heel strikes from the positive edges of a debounced wave.
pub fn detect_strides(wave: &SquareWave) -> Vec<StrideEvent> {
    let period = 1000.0 / wave.sample_rate_hz;
    let mut events = Vec::new();
    let mut last_edge_ms: Option<f64> = None;
    for i in 1..wave.levels.len() {
        if wave.levels[i - 1] == 0 && wave.levels[i] == 1 {
            let t = i as f64 * period;
            events.push(StrideEvent {
                time_ms: t,
                duration_ms: last_edge_ms.map(|prev| t - prev),
            });
            last_edge_ms = Some(t);
        }
    }
    events
}

/// Keep only the events whose stride duration differs from the last one
/// emitted. The firmware sends an update over the radio exactly at these
/// events; repeats are suppressed.
pub fn emit_cadence_updates(events: &[StrideEvent]) -> Vec<StrideEvent> {
    let mut out = Vec::new();
    let mut last: Option<f64> = None;
    for ev in events {
        if let Some(d) = ev.duration_ms {
            if last != Some(d) {
                out.push(*ev);
                last = Some(d);
            }
        }
    }
    out
}

/// End-to-end extraction with the firmware defaults.
#[derive(Debug, Clone)]
pub struct StridePipeline {
    /// Length of the calibration window at the start of the trace.
    pub calibration_window_ms: f64,
    /// Shortest stance or swing phase considered physically possible.
    pub min_phase_ms: f64,
}

impl Default for StridePipeline {
    fn default() -> Self {
        Self {
            calibration_window_ms: 5000.0,
            min_phase_ms: 150.0,
        }
    }
}

impl StridePipeline {
    /// Normalize, calibrate, binarize, debounce, detect.
    pub fn extract(&self, raw: &PressureTrace) -> Result<Vec<StrideEvent>, SignalError> {
        let normalized = raw.normalized(self.calibration_window_ms)?;
        let calib = PressureTrace::new(
            normalized.prefix_ms(self.calibration_window_ms).to_vec(),
            normalized.sample_rate_hz,
        )?;
        let threshold = calibrate(&calib)?;
        let wave = binarize(&normalized, threshold);
        let wave = debounce(&wave, self.min_phase_ms);
        Ok(detect_strides(&wave))
    }
}

/// Write stride events as `time_ms,duration_ms` CSV. The first event's
/// duration column is left empty.
pub fn write_events_csv(events: &[StrideEvent], path: &Path) -> Result<(), SignalError> {
    let mut out = String::from("time_ms,duration_ms\n");
    for ev in events {
        match ev.duration_ms {
            Some(d) => {
                let _ = writeln!(out, "{},{}", fmt_ms(ev.time_ms), fmt_ms(d));
            }
            None => {
                let _ = writeln!(out, "{},", fmt_ms(ev.time_ms));
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_events_csv(path: &Path) -> Result<Vec<StrideEvent>, SignalError> {
    let text = fs::read_to_string(path)?;
    let err = |line: usize, reason: &str| SignalError::MalformedCsv {
        path: path.display().to_string(),
        line,
        reason: reason.to_string(),
    };
    let mut events = Vec::new();
    for (idx, row) in text.lines().enumerate() {
        if idx == 0 || row.trim().is_empty() {
            continue;
        }
        let mut cols = row.split(',');
        let t: f64 = cols
            .next()
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| err(idx + 1, "bad time_ms"))?;
        let dur = match cols.next().map(str::trim) {
            None | Some("") => None,
            Some(c) => Some(c.parse().map_err(|_| err(idx + 1, "bad duration_ms"))?),
        };
        events.push(StrideEvent {
            time_ms: t,
            duration_ms: dur,
        });
    }
    Ok(events)
}

/// Plain decimal formatting that drops a trailing `.0`, so integer-valued
/// times round-trip as integers.
pub(crate) fn fmt_ms(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{}", v)
    }
}
