//! Domain types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Packet sizes are aligned to this many bytes.
pub const PAYLOAD_QUANTUM: u64 = 32;

/// Operational state of the machine. The integer codes are part of every
/// persisted format and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum ProductionState {
    Running = 1,
    Reentry = 2,
    Stopped = 3,
    Aborted = 4,
    Ended = 5,
}

impl ProductionState {
    pub const COUNT: usize = 5;

    pub const ALL: [ProductionState; 5] = [
        ProductionState::Running,
        ProductionState::Reentry,
        ProductionState::Stopped,
        ProductionState::Aborted,
        ProductionState::Ended,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code).checked_sub(1)?).copied()
    }

    /// Zero-based position, used for matrix and vector indexing.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ProductionState::Running => "Running",
            ProductionState::Reentry => "Reentry",
            ProductionState::Stopped => "Stopped",
            ProductionState::Aborted => "Aborted",
            ProductionState::Ended => "Ended",
        }
    }

    pub fn one_hot(self) -> [f64; Self::COUNT] {
        let mut v = [0.0; Self::COUNT];
        v[self.index()] = 1.0;
        v
    }

    /// Inverse of [`one_hot`](Self::one_hot). Anything other than exactly one
    /// 1.0 among 0.0 entries is rejected.
    pub fn from_one_hot(v: &[f64]) -> Option<Self> {
        if v.len() != Self::COUNT || v.iter().any(|&x| x != 0.0 && x != 1.0) {
            return None;
        }
        let mut hot = v.iter().enumerate().filter(|(_, &x)| x == 1.0);
        match (hot.next(), hot.next()) {
            (Some((i, _)), None) => Self::from_index(i),
            _ => None,
        }
    }
}

impl fmt::Display for ProductionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProductionState {
    type Err = Error;

    /// Accepts a state name (case-insensitive) or its integer code.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(code) = s.parse::<u8>() {
            return Self::from_code(code)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown state code {code}")));
        }
        Self::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown state `{s}`")))
    }
}

impl From<ProductionState> for u8 {
    fn from(s: ProductionState) -> u8 {
        s.code()
    }
}

impl TryFrom<u8> for ProductionState {
    type Error = String;

    fn try_from(code: u8) -> std::result::Result<Self, String> {
        Self::from_code(code).ok_or_else(|| format!("invalid state code {code}"))
    }
}

/// One row of the machine log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    /// Milliseconds since the Unix epoch.
    pub processed_ms: f64,
    pub data_id: String,
    pub data_value: String,
    /// Raw payload size in bytes, before quantization.
    pub data_payload: u64,
}

/// A packet observation: gap since the previous packet and its size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficSample {
    pub interarrival_ms: f64,
    pub size_bytes: u64,
    pub state: ProductionState,
}

/// Rounds a raw payload up to the next multiple of [`PAYLOAD_QUANTUM`].
/// Empty payloads stay empty.
pub fn quantize_payload(raw_bytes: u64) -> u64 {
    raw_bytes.div_ceil(PAYLOAD_QUANTUM) * PAYLOAD_QUANTUM
}
