use std::io;

/// Errors produced by the engine, the model container and the governor.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{layer}: dimension mismatch: {detail}")]
    Dimension { layer: String, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("state error: {0}")]
    State(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("truncated file: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: u64, needed: u64 },

    #[error("record {name:?}: expected dims {expected:?}, found {found:?}")]
    RecordDims {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("malformed file at offset {offset}: {reason}")]
    Malformed { offset: u64, reason: String },

    #[error("ingestion error at byte offset {offset}: {reason}")]
    Ingest { offset: u64, reason: String },

    #[error("profile line {line}: duplicate operating point ({core}, {freq_hz} Hz, k={k})")]
    DuplicatePoint {
        line: usize,
        core: String,
        freq_hz: u64,
        k: usize,
    },

    #[error("profile line {line}: {field} must be positive, got {value}")]
    NonPositive { line: usize, field: &'static str, value: f64 },

    #[error("profile: accuracy for k={k} differs between points ({first} vs {second})")]
    InconsistentAccuracy { k: usize, first: f64, second: f64 },

    #[error("profile line {line}: {reason}")]
    ProfileParse { line: usize, reason: String },

    #[error("no operating point satisfies {metric} <= {limit}; minimum achievable is {min_achievable}")]
    Infeasible {
        metric: String,
        limit: f64,
        min_achievable: f64,
    },

    #[error("measurement error: {0}")]
    Measurement(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension {
            layer: layer.into(),
            detail: detail.into(),
        }
    }
}
