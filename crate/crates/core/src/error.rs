use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Bad magic, unsupported version or otherwise malformed input.
    #[error("format error: {0}")]
    Format(String),

    #[error("truncated input: expected {expected} bytes of {what}, found {found}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("descriptor dimension mismatch: {first} has d={first_d}, {second} has d={second_d}")]
    DimensionMismatch {
        first: String,
        first_d: usize,
        second: String,
        second_d: usize,
    },

    #[error("empty set: at least one descriptor grid is required")]
    EmptySet,

    /// The covariance spectrum has no usable gap at the requested component.
    #[error("degenerate spectrum at component {component}: gap estimate {gap:e} ({reason})")]
    DegenerateSpectrum {
        component: usize,
        gap: f64,
        reason: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
