//! Codec for the shoe-pod pedometer's 34-byte serial packets and the
//! step-count to cadence pipeline built on them.
//!
//! Packet layout: a fixed `FF 55` header, a five-byte `1E 09 0D 0D 01`
//! prefix, 26 payload bytes and one additive checksum byte. The sensor
//! streams one packet per second carrying the cumulative step count.
//!
//! Two checksum conventions exist for this family of packets. Packets this
//! crate encodes use the two's-complement sum (covered bytes plus checksum
//! are zero modulo 256). Captures from real pods validate under the one's
//! complement variant instead (sum plus checksum is 0xFF); `Convention`
//! selects which one `parse_packet` enforces, and
//! `find_checksum_convention` searches for the rule matching a given
//! packet. Either way the sum covers everything after the header: prefix
//! and payload.
//!
//! The cleartext payload layout here (serial, then steps) is this crate's
//! own convention for round-trip testing; real pods scramble their payload
//! and are not interoperable beyond the framing and checksum.

use std::fmt::Write as _;

use thiserror::Error;

pub const PACKET_LEN: usize = 34;
pub const HEADER: [u8; 2] = [0xFF, 0x55];
pub const PREFIX: [u8; 5] = [0x1E, 0x09, 0x0D, 0x0D, 0x01];
pub const PAYLOAD_LEN: usize = 26;
/// Byte range covered by the checksum: prefix plus payload.
pub const CHECKSUM_RANGE: std::ops::Range<usize> = 2..33;

const PAYLOAD_RANGE: std::ops::Range<usize> = 7..33;
const MAX_STEPS: u32 = 0xFF_FF_FF;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PacketError {
    #[error("packet must be {PACKET_LEN} bytes, got {0}")]
    BadLength(usize),
    #[error("bad header {0:02X} {1:02X}")]
    BadHeader(u8, u8),
    #[error("bad payload prefix")]
    BadPrefix,
    #[error("checksum mismatch: computed {computed:02X}, found {found:02X}")]
    BadChecksum { computed: u8, found: u8 },
    #[error("{0}")]
    FieldOutOfRange(String),
    #[error("cumulative steps decreased at reading {0}")]
    NonMonotonicSteps(usize),
    #[error("bad hex byte `{0}`")]
    BadHex(String),
}

/// Additive checksum rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    /// `(0x100 - sum) & 0xFF`; covered bytes plus checksum sum to 0.
    #[default]
    TwosComplement,
    /// `!sum & 0xFF`; covered bytes plus checksum sum to 0xFF.
    OnesComplement,
}

impl Convention {
    fn apply(self, sum: u8) -> u8 {
        match self {
            Convention::TwosComplement => (0x100u16 - sum as u16) as u8,
            Convention::OnesComplement => !sum,
        }
    }
}

/// Two's-complement checksum of a byte slice.
pub fn checksum(bytes: &[u8]) -> u8 {
    checksum_with(bytes, Convention::TwosComplement)
}

pub fn checksum_with(bytes: &[u8], convention: Convention) -> u8 {
    let sum = bytes.iter().fold(0u8, |acc, b| acc.wrapping_add(*b));
    convention.apply(sum)
}

/// A validated 34-byte packet with its fields split out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NikePacket {
    raw: [u8; PACKET_LEN],
}

impl NikePacket {
    pub fn raw(&self) -> &[u8; PACKET_LEN] {
        &self.raw
    }

    pub fn header(&self) -> &[u8] {
        &self.raw[..2]
    }

    pub fn prefix(&self) -> &[u8] {
        &self.raw[2..7]
    }

    pub fn payload(&self) -> &[u8] {
        &self.raw[PAYLOAD_RANGE]
    }

    pub fn checksum_byte(&self) -> u8 {
        self.raw[PACKET_LEN - 1]
    }

    /// Sensor serial number, little-endian at payload offset 0.
    pub fn serial(&self) -> u32 {
        u32::from_le_bytes(self.payload()[..4].try_into().unwrap())
    }

    /// Cumulative steps, 24-bit little-endian at payload offset 4.
    pub fn cumulative_steps(&self) -> u32 {
        let p = self.payload();
        u32::from_le_bytes([p[4], p[5], p[6], 0])
    }

    /// Free-form remainder of the payload.
    pub fn aux(&self) -> &[u8] {
        &self.payload()[7..]
    }
}

/// Validate framing and checksum, splitting the packet into fields.
/// Checks run in order: length, header, prefix, checksum; each corruption
/// is reported by exactly one error.
pub fn parse_packet(raw: &[u8], convention: Convention) -> Result<NikePacket, PacketError> {
    if raw.len() != PACKET_LEN {
        return Err(PacketError::BadLength(raw.len()));
    }
    if raw[..2] != HEADER {
        return Err(PacketError::BadHeader(raw[0], raw[1]));
    }
    if raw[2..7] != PREFIX {
        return Err(PacketError::BadPrefix);
    }
    let computed = checksum_with(&raw[CHECKSUM_RANGE], convention);
    let found = raw[PACKET_LEN - 1];
    if computed != found {
        return Err(PacketError::BadChecksum { computed, found });
    }
    Ok(NikePacket {
        raw: raw.try_into().unwrap(),
    })
}

/// Build a packet from cleartext fields under the default convention.
pub fn encode_packet(serial: u32, cumulative_steps: u32, aux: &[u8]) -> Result<[u8; PACKET_LEN], PacketError> {
    if cumulative_steps > MAX_STEPS {
        return Err(PacketError::FieldOutOfRange(format!(
            "steps {cumulative_steps} exceed 24-bit maximum {MAX_STEPS}"
        )));
    }
    if aux.len() > PAYLOAD_LEN - 7 {
        return Err(PacketError::FieldOutOfRange(format!(
            "aux field of {} bytes exceeds {} available",
            aux.len(),
            PAYLOAD_LEN - 7
        )));
    }
    let mut raw = [0u8; PACKET_LEN];
    raw[..2].copy_from_slice(&HEADER);
    raw[2..7].copy_from_slice(&PREFIX);
    raw[7..11].copy_from_slice(&serial.to_le_bytes());
    let steps = cumulative_steps.to_le_bytes();
    raw[11..14].copy_from_slice(&steps[..3]);
    raw[14..14 + aux.len()].copy_from_slice(aux);
    raw[PACKET_LEN - 1] = checksum(&raw[CHECKSUM_RANGE]);
    Ok(raw)
}

/// Search for the checksum rule a packet satisfies. Candidate sums start at
/// the header, after the header, or at the payload, under both conventions.
/// Returns (range, convention) of the first match.
pub fn find_checksum_convention(
    raw: &[u8; PACKET_LEN],
) -> Option<(std::ops::Range<usize>, Convention)> {
    let candidates = [0..33usize, 2..33, 7..33];
    for range in candidates {
        for convention in [Convention::TwosComplement, Convention::OnesComplement] {
            if checksum_with(&raw[range.clone()], convention) == raw[PACKET_LEN - 1] {
                return Some((range, convention));
            }
        }
    }
    None
}

/// Keep only packets whose serial matches; every pod broadcasts on the same
/// radio channel, so foreign packets are routine.
pub fn filter_by_serial(packets: &[NikePacket], my_serial: u32) -> Vec<NikePacket> {
    packets
        .iter()
        .filter(|p| p.serial() == my_serial)
        .cloned()
        .collect()
}

/// One decoded step-count reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReading {
    pub serial: u32,
    pub cumulative_steps: u32,
    pub rx_time_s: f64,
}

/// Drop exact duplicate readings, keyed by (serial, steps, rx_time).
pub fn dedup_readings(readings: &[StepReading]) -> Vec<StepReading> {
    let mut out: Vec<StepReading> = Vec::with_capacity(readings.len());
    for r in readings {
        let dup = out.iter().any(|q| {
            q.serial == r.serial
                && q.cumulative_steps == r.cumulative_steps
                && q.rx_time_s == r.rx_time_s
        });
        if !dup {
            out.push(*r);
        }
    }
    out
}

/// Steps-per-minute series from cumulative readings via a moving window.
///
/// For each reading the rate is `(steps_now - steps_then) / window * 60`
/// where `then` is `window_s` back; while the series is shorter than the
/// window the available span is used. The very first reading has no span
/// and reports zero.
pub fn cadence_from_steps(
    readings: &[StepReading],
    window_s: f64,
) -> Result<Vec<f64>, PacketError> {
    let mut out = Vec::with_capacity(readings.len());
    for (i, r) in readings.iter().enumerate() {
        if i > 0 && r.cumulative_steps < readings[i - 1].cumulative_steps {
            return Err(PacketError::NonMonotonicSteps(i));
        }
        let window_start = r.rx_time_s - window_s;
        // Latest reading at or before the window start, else the first.
        let past = readings[..=i]
            .iter()
            .take_while(|q| q.rx_time_s <= window_start)
            .last()
            .unwrap_or(&readings[0]);
        let span = r.rx_time_s - past.rx_time_s;
        if span <= 0.0 {
            out.push(0.0);
        } else {
            let steps = (r.cumulative_steps - past.cumulative_steps) as f64;
            out.push(steps / span * 60.0);
        }
    }
    Ok(out)
}

/// Parse whitespace-separated hex bytes (the capture file format).
pub fn parse_hex_bytes(text: &str) -> Result<Vec<u8>, PacketError> {
    text.split_whitespace()
        .map(|tok| u8::from_str_radix(tok, 16).map_err(|_| PacketError::BadHex(tok.to_string())))
        .collect()
}

pub fn format_hex_bytes(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 3);
    for (i, b) in bytes.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{b:02X}");
    }
    out
}
