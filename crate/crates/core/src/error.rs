use thiserror::Error;

/// Errors produced by the steerfuse library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?} ({context})")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
        context: String,
    },

    #[error("invalid tensor: shape {shape:?} implies {expected} values, got {got}")]
    BadTensorData {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("invalid geometry at layer {layer}: {reason}")]
    BadGeometry { layer: String, reason: String },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("missing input: variant {variant} requires the {modality} modality")]
    MissingModality { variant: String, modality: String },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("ring {ring} has no road echoes in the fitting corpus")]
    EmptyRing { ring: usize },

    #[error("sequence too short: {len} frames, need at least {min}")]
    SequenceTooShort { len: usize, min: usize },

    #[error("corrupt frame record {index}: {reason}")]
    CorruptFrame { index: u64, reason: String },

    #[error("track infeasible: {0}")]
    InfeasibleTrack(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code class: config errors exit with 2, runtime failures with 1.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidArgument(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
