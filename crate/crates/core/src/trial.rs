//! Trial records on disk.
//!
//! A trial directory is self-describing plot-ready CSV:
//!
//! ```text
//! strides_<id>.csv   time_ms,duration_ms       one row per completed stride
//! pulses_<id>.csv    start_ms,side,duration_ms one row per vibration pulse
//! reference.csv      start_ms,duration_ms      piecewise-constant target
//! relay.log          tab-separated full-state log (empty for solo runs)
//! meta.txt           key = value config echo, including every default
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::metrics::Stride;
use crate::relay::{self, LogRecord};
use crate::scenarios::{ScenarioKind, TrialMetrics, TrialRecord, TrialView};
use crate::signal::fmt_ms;
use crate::walker::ReferenceTimeline;

#[derive(Debug, Error)]
pub enum TrialError {
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("meta.txt is missing key `{0}`")]
    MissingKey(String),
    #[error("unknown scenario kind `{0}`")]
    UnknownKind(String),
    #[error(transparent)]
    Relay(#[from] relay::RelayError),
    #[error(transparent)]
    Walker(#[from] crate::walker::WalkerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Write the full record; creates `dir` if needed.
pub fn write_trial_dir(record: &TrialRecord, dir: &Path) -> Result<(), TrialError> {
    fs::create_dir_all(dir)?;

    for w in &record.walkers {
        let mut out = String::from("time_ms,duration_ms\n");
        for s in &w.strides {
            let _ = writeln!(out, "{},{}", fmt_ms(s.end_ms), fmt_ms(s.duration_ms));
        }
        fs::write(dir.join(format!("strides_{}.csv", w.user_id)), out)?;

        crate::scheduler::write_pulses_csv(&w.pulses, &dir.join(format!("pulses_{}.csv", w.user_id)))?;
    }

    let mut out = String::from("start_ms,duration_ms\n");
    for (start, d) in record.reference.segments() {
        let _ = writeln!(out, "{},{}", start, fmt_ms(*d));
    }
    fs::write(dir.join("reference.csv"), out)?;

    relay::write_log(&record.relay_log, &dir.join("relay.log"))?;

    let mut out = String::new();
    for (k, v) in &record.meta {
        let _ = writeln!(out, "{k} = {v}");
    }
    fs::write(dir.join("meta.txt"), out)?;
    Ok(())
}

/// A trial directory read back for analysis.
#[derive(Debug, Clone)]
pub struct TrialDir {
    pub meta: BTreeMap<String, String>,
    pub kind: ScenarioKind,
    /// (user_id, configured baseline, strides)
    pub walkers: Vec<(String, f64, Vec<Stride>)>,
    pub reference: ReferenceTimeline,
    pub relay_log: Vec<LogRecord>,
}

impl TrialDir {
    pub fn view(&self) -> Result<TrialView<'_>, TrialError> {
        let num = |key: &str| -> Result<f64, TrialError> {
            self.meta
                .get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| TrialError::MissingKey(key.to_string()))
        };
        let on = num("haptics_on_ms")? as u64;
        let off = num("haptics_off_ms")? as u64;
        let total = (num("phase_baseline_ms")? + num("phase_haptic_ms")? + num("phase_post_ms")?)
            as u64;
        let sustain = num("sustain")? as usize;
        Ok(TrialView {
            kind: self.kind,
            haptics_on_ms: on,
            haptics_off_ms: off,
            total_ms: total,
            sustain,
            reference: &self.reference,
            walkers: self
                .walkers
                .iter()
                .map(|(id, baseline, strides)| (id.as_str(), *baseline, strides.as_slice()))
                .collect(),
        })
    }

    pub fn band_pct(&self) -> f64 {
        self.meta
            .get("band_pct")
            .and_then(|v| v.parse().ok())
            .unwrap_or(4.0)
    }
}

pub fn read_trial_dir(dir: &Path) -> Result<TrialDir, TrialError> {
    let meta_path = dir.join("meta.txt");
    let meta_text = fs::read_to_string(&meta_path)?;
    let mut meta = BTreeMap::new();
    for (idx, line) in meta_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| TrialError::Malformed {
            path: meta_path.display().to_string(),
            line: idx + 1,
            reason: "expected key = value".into(),
        })?;
        meta.insert(k.trim().to_string(), v.trim().to_string());
    }

    let kind_name = meta
        .get("kind")
        .ok_or_else(|| TrialError::MissingKey("kind".into()))?;
    let kind = ScenarioKind::from_name(kind_name)
        .ok_or_else(|| TrialError::UnknownKind(kind_name.clone()))?;

    let ids: Vec<String> = meta
        .get("walkers")
        .ok_or_else(|| TrialError::MissingKey("walkers".into()))?
        .split(',')
        .map(str::to_string)
        .collect();

    let mut walkers = Vec::new();
    for id in &ids {
        let baseline: f64 = meta
            .get(&format!("walker.{id}.baseline_ms"))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| TrialError::MissingKey(format!("walker.{id}.baseline_ms")))?;
        let path = dir.join(format!("strides_{id}.csv"));
        let strides = read_strides_csv(&path)?;
        walkers.push((id.clone(), baseline, strides));
    }

    let reference = read_reference_csv(&dir.join("reference.csv"))?;
    let relay_log = relay::read_log(&dir.join("relay.log"))?;

    Ok(TrialDir {
        meta,
        kind,
        walkers,
        reference,
        relay_log,
    })
}

pub fn read_strides_csv(path: &Path) -> Result<Vec<Stride>, TrialError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| TrialError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            reason: reason.into(),
        };
        let (t, d) = line.split_once(',').ok_or_else(|| bad("expected two columns"))?;
        out.push(Stride {
            end_ms: t.trim().parse().map_err(|_| bad("bad time_ms"))?,
            duration_ms: d.trim().parse().map_err(|_| bad("bad duration_ms"))?,
        });
    }
    Ok(out)
}

pub fn read_reference_csv(path: &Path) -> Result<ReferenceTimeline, TrialError> {
    let text = fs::read_to_string(path)?;
    let mut segments = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| TrialError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            reason: reason.into(),
        };
        let (t, d) = line.split_once(',').ok_or_else(|| bad("expected two columns"))?;
        let start: u64 = t.trim().parse().map_err(|_| bad("bad start_ms"))?;
        let duration: f64 = d.trim().parse().map_err(|_| bad("bad duration_ms"))?;
        segments.push((start, duration));
    }
    Ok(ReferenceTimeline::new(segments)?)
}

/// Metrics table as CSV, one row per walker.
pub fn metrics_csv(metrics: &TrialMetrics) -> String {
    let mut out = String::from(
        "user,baseline_mean_ms,baseline_std_ms,haptic_mean_ms,haptic_std_ms,post_mean_ms,\
         post_std_ms,alignment_pct,time_to_alignment_s,cadence_variation_pct,recovery_z\n",
    );
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for w in &metrics.walkers {
        let _ = writeln!(
            out,
            "{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{},{},{:.4},{:.3}",
            w.user_id,
            w.baseline_mean_ms,
            w.baseline_std_ms,
            w.haptic_mean_ms,
            w.haptic_std_ms,
            w.post_mean_ms,
            w.post_std_ms,
            opt(w.alignment_pct),
            opt(w.time_to_alignment_s),
            w.cadence_variation_pct,
            w.recovery_z,
        );
    }
    out
}

/// Per-stride aligned flags for each walker that had a target, as CSV files
/// next to the trial data.
pub fn write_flags_csv(
    view: &TrialView,
    band_pct: f64,
    dir: &Path,
) -> Result<(), TrialError> {
    let band = crate::metrics::ToleranceBand::new(band_pct)
        .map_err(|e| TrialError::MissingKey(e.to_string()))?;
    let on = view.haptics_on_ms as f64;
    let off = view.haptics_off_ms as f64;
    for (i, (id, _, strides)) in view.walkers.iter().enumerate() {
        let follows = match view.kind {
            ScenarioKind::PeerToPeer => true,
            ScenarioKind::HumanLeader => i == 1,
            _ => i == 0,
        };
        if !follows {
            continue;
        }
        let mut out = String::from("end_ms,duration_ms,reference_ms,aligned\n");
        if view.kind == ScenarioKind::PeerToPeer {
            let partner = view.walkers[1 - i].2;
            let own = crate::scenarios::strides_between(strides, on, off);
            let other = crate::scenarios::strides_between(partner, on, off);
            if let Ok(series) = crate::metrics::peer_alignment_series(&own, &other, band) {
                let flags = if i == 0 { &series.flags_a } else { &series.flags_b };
                let mut by_end: BTreeMap<u64, (f64, bool)> = BTreeMap::new();
                for f in flags {
                    by_end.insert(f.end_ms as u64, (f.partner_ms, f.aligned));
                }
                for s in &own {
                    if let Some((partner_ms, aligned)) = by_end.get(&(s.end_ms as u64)) {
                        let _ = writeln!(
                            out,
                            "{},{},{},{}",
                            fmt_ms(s.end_ms),
                            fmt_ms(s.duration_ms),
                            fmt_ms(*partner_ms),
                            aligned
                        );
                    }
                }
            }
        } else {
            for s in crate::scenarios::strides_between(strides, on, off) {
                if let Some(r) = view.reference.value_at(s.start_ms().max(0.0) as u64) {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        fmt_ms(s.end_ms),
                        fmt_ms(s.duration_ms),
                        fmt_ms(r),
                        band.contains(s.duration_ms, r)
                    );
                }
            }
        }
        fs::write(dir.join(format!("flags_{id}.csv")), out)?;
    }
    Ok(())
}
