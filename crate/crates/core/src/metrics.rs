//! Synchronization metrics for walking trials.
//!
//! A trial yields timestamped stride durations per walker plus a reference
//! timeline (a constant target, a scripted leader, or the partner's stride
//! stream). The metrics here quantify how well a walker followed it:
//! tolerance-band alignment percentages, time to alignment, mutual peer
//! alignment, distribution percentiles and correlation coefficients.
//!
//! Conventions, spelled out because they matter when comparing runs:
//! - A stride spans `[end_ms - duration_ms, end_ms]`. Band membership for
//!   alignment percentages is judged against the reference at the stride's
//!   *start*, so a stride walked under the old target is not blamed for a
//!   target change that happened mid-stride.
//! - `time_to_alignment` judges strides against the reference at their
//!   *completion*: being aligned means matching the current target.
//! - Percentiles default to the exclusive linear-interpolation method
//!   (rank `(n+1)p`); it is the convention that reproduces our published
//!   quartile tables. The inclusive variant (rank `(n-1)p + 1`) is also
//!   available.

use thiserror::Error;

use crate::walker::ReferenceTimeline;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("tolerance band must be non-negative, got {0}")]
    BadBand(f64),
    #[error("no strides inside the evaluation window")]
    EmptyWindow,
    #[error("never aligned within the trial")]
    NotAligned,
    #[error("stride streams do not overlap in time")]
    NoOverlap,
    #[error("empty input")]
    Empty,
    #[error("inputs must have equal length >= 3, got {0} and {1}")]
    MismatchedLengths(usize, usize),
    #[error("zero variance makes the coefficient undefined")]
    DegenerateVariance,
}

/// One completed stride: when it ended and how long it took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stride {
    pub end_ms: f64,
    pub duration_ms: f64,
}

impl Stride {
    pub fn start_ms(&self) -> f64 {
        self.end_ms - self.duration_ms
    }
}

/// Allowed fractional deviation from the reference, in percent.
/// 2, 4 and 6 percent are the customary bands; any non-negative value works
/// (zero degenerates to exact matching).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceBand {
    band_pct: f64,
}

impl ToleranceBand {
    pub fn new(band_pct: f64) -> Result<Self, MetricsError> {
        if !band_pct.is_finite() || band_pct < 0.0 {
            return Err(MetricsError::BadBand(band_pct));
        }
        Ok(Self { band_pct })
    }

    pub fn pct(&self) -> f64 {
        self.band_pct
    }

    /// True when `duration` lies within `reference * (1 ± band/100)`.
    pub fn contains(&self, duration_ms: f64, reference_ms: f64) -> bool {
        (duration_ms - reference_ms).abs() <= reference_ms * self.band_pct / 100.0
    }
}

/// Mean, spread and relative variability of a stride population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineStats {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub variability_pct: f64,
}

/// Population statistics of stride durations.
pub fn baseline_stats(durations_ms: &[f64]) -> Result<BaselineStats, MetricsError> {
    if durations_ms.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = durations_ms.len() as f64;
    let mean = durations_ms.iter().sum::<f64>() / n;
    let var = durations_ms.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    Ok(BaselineStats {
        mean_ms: mean,
        std_ms: std,
        variability_pct: if mean > 0.0 { std / mean * 100.0 } else { 0.0 },
    })
}

/// How strides are weighted when aggregating alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// Each stride weighs its own duration: share of walked time.
    TimeWeighted,
    /// Each stride counts once.
    CountWeighted,
}

/// Share of walking after `from_ms` spent inside the tolerance band.
///
/// Strides starting at or after `from_ms` take part; strides starting
/// before the reference exists are skipped.
pub fn alignment_percentage(
    strides: &[Stride],
    reference: &ReferenceTimeline,
    band: ToleranceBand,
    from_ms: f64,
    weighting: Weighting,
) -> Result<f64, MetricsError> {
    let mut total = 0.0;
    let mut aligned = 0.0;
    for s in strides {
        if s.start_ms() < from_ms {
            continue;
        }
        let Some(reference_ms) = reference.value_at(s.start_ms().max(0.0) as u64) else {
            continue;
        };
        let weight = match weighting {
            Weighting::TimeWeighted => s.duration_ms,
            Weighting::CountWeighted => 1.0,
        };
        total += weight;
        if band.contains(s.duration_ms, reference_ms) {
            aligned += weight;
        }
    }
    if total <= 0.0 {
        return Err(MetricsError::EmptyWindow);
    }
    Ok(aligned / total * 100.0)
}

/// Seconds from haptics activation to the completion of the first run of
/// `sustain` consecutive in-band strides.
///
/// Only strides completing after `haptics_on_ms` are considered, judged
/// against the reference at their completion time.
pub fn time_to_alignment(
    strides: &[Stride],
    reference: &ReferenceTimeline,
    band: ToleranceBand,
    haptics_on_ms: f64,
    sustain: usize,
) -> Result<f64, MetricsError> {
    let sustain = sustain.max(1);
    let mut run = 0usize;
    for s in strides {
        if s.end_ms <= haptics_on_ms {
            continue;
        }
        let in_band = reference
            .value_at(s.end_ms.max(0.0) as u64)
            .is_some_and(|r| band.contains(s.duration_ms, r));
        if in_band {
            run += 1;
            if run == sustain {
                return Ok((s.end_ms - haptics_on_ms) / 1000.0);
            }
        } else {
            run = 0;
        }
    }
    Err(MetricsError::NotAligned)
}

/// Whether one walker's stride matched the partner's rhythm at that moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeerFlag {
    /// Completion time of the judged stride.
    pub end_ms: f64,
    /// The partner stride duration it was compared against.
    pub partner_ms: f64,
    pub aligned: bool,
}

/// Mutual alignment of two stride streams.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerAlignment {
    pub flags_a: Vec<PeerFlag>,
    pub flags_b: Vec<PeerFlag>,
    /// Aligned share over both directions, percent.
    pub percentage: f64,
}

/// Compare every stride against the partner's last completed stride.
///
/// A stride counts as aligned when its duration lies within the partner's
/// most recent stride duration ± band. "Most recent" is strict: a partner
/// stride completing at exactly the same millisecond is not yet known to
/// the walker and the one before it is used instead.
pub fn peer_alignment_series(
    strides_a: &[Stride],
    strides_b: &[Stride],
    band: ToleranceBand,
) -> Result<PeerAlignment, MetricsError> {
    if strides_a.is_empty() || strides_b.is_empty() {
        return Err(MetricsError::Empty);
    }
    let flags_a = directed_flags(strides_a, strides_b, band);
    let flags_b = directed_flags(strides_b, strides_a, band);
    let total = flags_a.len() + flags_b.len();
    if total == 0 {
        return Err(MetricsError::NoOverlap);
    }
    let aligned = flags_a.iter().chain(&flags_b).filter(|f| f.aligned).count();
    Ok(PeerAlignment {
        percentage: aligned as f64 / total as f64 * 100.0,
        flags_a,
        flags_b,
    })
}

fn directed_flags(own: &[Stride], partner: &[Stride], band: ToleranceBand) -> Vec<PeerFlag> {
    let mut flags = Vec::new();
    for s in own {
        let last = partner
            .iter()
            .take_while(|p| p.end_ms < s.end_ms)
            .last();
        if let Some(p) = last {
            flags.push(PeerFlag {
                end_ms: s.end_ms,
                partner_ms: p.duration_ms,
                aligned: band.contains(s.duration_ms, p.duration_ms),
            });
        }
    }
    flags
}

/// Linear-interpolation percentile conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PercentileMethod {
    /// Rank `(n+1)p`, clamped to the data range. Matches the published
    /// quartile tables this crate is validated against.
    Exclusive,
    /// Rank `(n-1)p + 1`, the spreadsheet PERCENTILE.INC convention.
    Inclusive,
}

/// Values at the requested percentiles (0..=100) of `values`.
pub fn percentiles(
    values: &[f64],
    ps: &[f64],
    method: PercentileMethod,
) -> Result<Vec<f64>, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len() as f64;
    Ok(ps
        .iter()
        .map(|p| {
            let frac = p / 100.0;
            let h = match method {
                PercentileMethod::Exclusive => frac * (n + 1.0),
                PercentileMethod::Inclusive => frac * (n - 1.0) + 1.0,
            }
            .clamp(1.0, n);
            let lo = h.floor() as usize;
            let t = h - lo as f64;
            let a = sorted[lo - 1];
            let b = if lo < sorted.len() { sorted[lo] } else { a };
            a + t * (b - a)
        })
        .collect())
}

/// Relative change of the average cadence against the baseline, percent.
pub fn cadence_variation(baseline_ms: f64, condition_mean_ms: f64) -> f64 {
    (condition_mean_ms - baseline_ms).abs() / baseline_ms * 100.0
}

/// Pearson product-moment correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(MetricsError::MismatchedLengths(xs.len(), ys.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateVariance);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Spearman rank-order correlation: Pearson over average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(MetricsError::MismatchedLengths(xs.len(), ys.len()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

/// Long-run variance of a serially correlated series.
///
/// Stride sequences are autocorrelated, so the naive sample variance
/// understates the spread of their window means. This prewhitens with a
/// fitted first-order coefficient, applies a Bartlett-windowed sum of
/// residual autocovariances with the demeaning bias correction, and
/// recolors. Floored at the plain sample variance.
pub fn long_run_variance(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = values.len();
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let gamma0 = centered.iter().map(|v| v * v).sum::<f64>() / nf;
    if gamma0 == 0.0 || n < 4 {
        return Ok(gamma0);
    }
    let gamma1 = (0..n - 1).map(|i| centered[i] * centered[i + 1]).sum::<f64>() / nf;
    let r1 = (gamma1 / gamma0).clamp(0.0, 0.97);

    // Prewhitened residuals e_k = x_k - r1 * x_{k-1}.
    let resid: Vec<f64> = (1..n).map(|i| centered[i] - r1 * centered[i - 1]).collect();
    let m = resid.len();
    let mf = m as f64;
    let rmean = resid.iter().sum::<f64>() / mf;
    let rg0 = resid.iter().map(|v| (v - rmean).powi(2)).sum::<f64>() / mf;
    let max_lag = (m - 1).min((m / 4).max(8));
    let mut lrv_resid = rg0;
    let mut weight_sum = 0.0;
    for k in 1..=max_lag {
        let g = (0..m - k)
            .map(|i| (resid[i] - rmean) * (resid[i + k] - rmean))
            .sum::<f64>()
            / mf;
        let w = 1.0 - k as f64 / (max_lag as f64 + 1.0);
        weight_sum += w;
        lrv_resid += 2.0 * w * g;
    }
    let correction = mf / (mf - 1.0 - 2.0 * weight_sum).max(1.0);
    let lrv = (lrv_resid * correction).max(0.0) / (1.0 - r1).powi(2);
    Ok(lrv.max(gamma0))
}

/// Standard error of the mean of a serially correlated sample.
pub fn autocorrelation_robust_se(values: &[f64]) -> Result<f64, MetricsError> {
    let lrv = long_run_variance(values)?;
    Ok((lrv / values.len() as f64).sqrt())
}

/// How many standard errors apart the means of two windows of the same
/// stationary process sit. Used to check that post-cueing walking returned
/// to the measured baseline. The long-run variance is pooled across both
/// windows (weighted by length), so the spread estimate uses all the
/// self-paced data available.
pub fn mean_shift_z(window_a: &[f64], window_b: &[f64]) -> Result<f64, MetricsError> {
    if window_a.is_empty() || window_b.is_empty() {
        return Err(MetricsError::Empty);
    }
    let na = window_a.len() as f64;
    let nb = window_b.len() as f64;
    let ma = window_a.iter().sum::<f64>() / na;
    let mb = window_b.iter().sum::<f64>() / nb;
    let lrv_a = long_run_variance(window_a)?;
    let lrv_b = long_run_variance(window_b)?;
    let lrv = (lrv_a * na + lrv_b * nb) / (na + nb);
    let se = (lrv * (1.0 / na + 1.0 / nb)).sqrt();
    if se == 0.0 {
        return Ok(if ma == mb { 0.0 } else { f64::INFINITY });
    }
    Ok((ma - mb).abs() / se)
}

/// Ranks 1..=n with ties given the average of the positions they occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j share one value; average rank is 1-indexed.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}
