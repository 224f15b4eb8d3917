use std::io;

use thiserror::Error;

/// Errors raised across the simulator and receiver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid band: {0}")]
    InvalidBand(String),

    #[error("invalid envelope window: {0}")]
    InvalidWindow(String),

    #[error("trace is empty")]
    EmptyTrace,

    #[error("segment length {segment} exceeds trace length {len}")]
    SegmentTooLong { segment: usize, len: usize },

    #[error("invalid hop {hop} for segment length {segment}")]
    InvalidHop { hop: usize, segment: usize },

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    RateMismatch { expected: f64, actual: f64 },

    #[error("device list is empty")]
    EmptyDeviceList,

    #[error("attenuation factor must be >= 1, got {0}")]
    InvalidAttenuation(f64),

    #[error("invalid model parameter: {0}")]
    InvalidModel(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("symbol {symbol} out of range for {bits_per_symbol} bits per symbol")]
    SymbolOutOfRange { symbol: u32, bits_per_symbol: u32 },

    #[error("no passband decodes the pilot sequence")]
    NoPilotFound,

    #[error("pilot sequence not found in trace")]
    PilotNotFound,

    #[error("degenerate distribution: {0}")]
    DegenerateSpec(String),

    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed trace file: {0}")]
    TraceFormat(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for the two "nothing to decode" outcomes.
    pub fn is_pilot_failure(&self) -> bool {
        matches!(self, Error::NoPilotFound | Error::PilotNotFound)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
