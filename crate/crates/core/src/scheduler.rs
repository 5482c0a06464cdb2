//! Vibration timing for one walker's anklet pair.
//!
//! The two anklets must vibrate 180 degrees out of phase, so the scheduler
//! fires alternating sides and waits half a stride period between pulses.
//! A cadence update therefore takes effect within half of the new period:
//! the next pulse is re-timed from the last fired pulse, keeping its side.
//!
//! All times are integer milliseconds on whatever clock the owner uses.
//! Half of an odd period rounds down.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

/// Fixed motor-on time per pulse.
pub const PULSE_DURATION_MS: u32 = 150;
/// Motor spin-up lag, carried on pulses as metadata only.
pub const MOTOR_LAG_MS: u32 = 20;
/// Motor rise/stop time, metadata only.
pub const MOTOR_RISE_STOP_MS: u32 = 35;
/// Shortest accepted period: a 150 ms pulse must end before the opposite
/// side fires at period/2.
pub const MIN_PERIOD_MS: u32 = 300;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("period must be positive, got {0}")]
    NonPositivePeriod(i64),
    #[error("scheduler is disabled")]
    Disabled,
}

/// Which ankle vibrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => write!(f, "L"),
            Side::Right => write!(f, "R"),
        }
    }
}

/// One timed actuation of one anklet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VibrationPulse {
    pub side: Side,
    pub start_ms: u64,
    pub duration_ms: u32,
    /// Motor lag, informational; scheduling works on command times.
    pub motor_lag_ms: u32,
    pub motor_rise_stop_ms: u32,
}

impl VibrationPulse {
    /// When the wearer actually feels the pulse begin.
    pub fn perceived_onset_ms(&self) -> u64 {
        self.start_ms + self.motor_lag_ms as u64
    }
}

/// Alternating half-period pulse scheduler.
///
/// Single-owner: the owning event loop serializes updates and pulse queries.
#[derive(Debug, Clone)]
pub struct Scheduler {
    period_ms: u32,
    enabled: bool,
    /// Set once the first pulse has fired.
    last_pulse: Option<(u64, Side)>,
    /// Due time and side of the first pulse before any has fired.
    first_due: (u64, Side),
    /// True when the last accepted period was clamped up to `MIN_PERIOD_MS`.
    clamped: bool,
}

impl Scheduler {
    /// New enabled scheduler; the first pulse is due at `start_ms` on
    /// `first_side`. Periods below `MIN_PERIOD_MS` are clamped.
    pub fn with_first_side(
        period_ms: i64,
        start_ms: u64,
        first_side: Side,
    ) -> Result<Self, SchedulerError> {
        let (period_ms, clamped) = accept_period(period_ms)?;
        Ok(Self {
            period_ms,
            enabled: true,
            last_pulse: None,
            first_due: (start_ms, first_side),
            clamped,
        })
    }

    /// New scheduler starting on the left side (the firmware convention).
    pub fn create(period_ms: i64, start_ms: u64) -> Result<Self, SchedulerError> {
        Self::with_first_side(period_ms, start_ms, Side::Left)
    }

    pub fn period_ms(&self) -> u32 {
        self.period_ms
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    /// True if the most recent period was raised to the minimum.
    pub fn last_period_clamped(&self) -> bool {
        self.clamped
    }

    pub fn set_enabled(&mut self, enabled: bool) {
        self.enabled = enabled;
    }

    /// Restart the pulse train: next pulse due at `start_ms` on `side`,
    /// forgetting previous pulse phase. Used when haptics are re-enabled.
    pub fn restart(&mut self, start_ms: u64, side: Side) {
        self.last_pulse = None;
        self.first_due = (start_ms, side);
    }

    /// When the next pulse would fire if queried at `now_ms`.
    pub fn next_due_ms(&self, now_ms: u64) -> Result<u64, SchedulerError> {
        if !self.enabled {
            return Err(SchedulerError::Disabled);
        }
        let due = match self.last_pulse {
            None => self.first_due.0,
            Some((t, _)) => t + (self.period_ms / 2) as u64,
        };
        Ok(due.max(now_ms))
    }

    /// Fire the next pulse. The pulse starts at
    /// `max(last_pulse + period/2, now)` on the side opposite the last one.
    pub fn next_pulse(&mut self, now_ms: u64) -> Result<VibrationPulse, SchedulerError> {
        let start_ms = self.next_due_ms(now_ms)?;
        let side = match self.last_pulse {
            None => self.first_due.1,
            Some((_, s)) => s.opposite(),
        };
        self.last_pulse = Some((start_ms, side));
        Ok(VibrationPulse {
            side,
            start_ms,
            duration_ms: PULSE_DURATION_MS,
            motor_lag_ms: MOTOR_LAG_MS,
            motor_rise_stop_ms: MOTOR_RISE_STOP_MS,
        })
    }

    /// Apply a cadence update at `now_ms`. The already scheduled pulse keeps
    /// its side; it is re-timed to `last_pulse + new_period/2`, or fires
    /// immediately if that deadline has already passed.
    pub fn on_update(&mut self, new_period_ms: i64, _now_ms: u64) -> Result<(), SchedulerError> {
        let (period_ms, clamped) = accept_period(new_period_ms)?;
        self.period_ms = period_ms;
        self.clamped = clamped;
        // Due time is derived from last_pulse on the fly; the max(now) rule
        // in next_due_ms covers the already-passed deadline.
        Ok(())
    }
}

fn accept_period(period_ms: i64) -> Result<(u32, bool), SchedulerError> {
    if period_ms <= 0 {
        return Err(SchedulerError::NonPositivePeriod(period_ms));
    }
    if (period_ms as u64) < MIN_PERIOD_MS as u64 {
        Ok((MIN_PERIOD_MS, true))
    } else {
        Ok((period_ms.min(u32::MAX as i64) as u32, false))
    }
}

/// Write a pulse log as `start_ms,side,duration_ms` CSV.
pub fn write_pulses_csv(pulses: &[VibrationPulse], path: &Path) -> Result<(), std::io::Error> {
    let mut out = String::from("start_ms,side,duration_ms\n");
    for p in pulses {
        let _ = writeln!(out, "{},{},{}", p.start_ms, p.side, p.duration_ms);
    }
    fs::write(path, out)
}
