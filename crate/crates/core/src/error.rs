use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failures while decoding a compressed block.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("payload for {encoding} must be {expected} bytes, found {found}")]
    PayloadLength {
        encoding: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("unknown compression encoding tag {0}")]
    UnknownTag(u8),
    #[error("block must be exactly 64 bytes, found {0}")]
    BlockLength(usize),
}

/// Failures of the rearrangement logic.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error("block of {size} bytes does not fit in a frame with {live} live bytes")]
    Capacity { size: usize, live: usize },
    #[error("global counter {gc} out of range for a {len}-byte frame")]
    CounterOutOfRange { gc: usize, len: usize },
    #[error("frame buffer has {found} bytes but the fault bitmap covers {expected}")]
    FrameLength { expected: usize, found: usize },
    #[error("invalid fault bitmap: {0}")]
    Bitmap(String),
}

/// Failures while reading or writing traces.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error on trace {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("i/o error: {0}")]
    Stream(#[from] io::Error),
    #[error("bad trace magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported trace version {0}")]
    UnsupportedVersion(u8),
    #[error("trace truncated after {read} of {expected} events")]
    Truncated { read: u64, expected: u64 },
    #[error("malformed record {index}: {reason}")]
    Malformed { index: u64, reason: String },
    #[error("timestamp went backwards at record {index}: {previous} then {current}")]
    NonMonotonic {
        index: u64,
        previous: u64,
        current: u64,
    },
}

/// Configuration problems, reported before any simulation starts.
#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("could not parse config: {0}")]
    Parse(String),
    #[error("unknown variant {0:?}")]
    UnknownVariant(String),
}

impl ConfigError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

/// Problems with serialized maps, snapshots and series.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Top-level error for simulation and forecast runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("map shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
