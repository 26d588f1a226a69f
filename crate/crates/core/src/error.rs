use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("unknown instance family {0} (expected one of 4, 10, 15, 50)")]
    UnknownFamily(u32),

    #[error("period {t} outside 1..={horizon}")]
    PeriodOutOfRange { t: usize, horizon: usize },

    #[error("routing infeasible: {needed} vehicles needed, {available} available")]
    Infeasible { needed: usize, available: usize },

    #[error("routing problem too large for exact enumeration: {customers} customers (max {max})")]
    TooLarge { customers: usize, max: usize },

    #[error("state space has {states} states, above the configured cap of {cap}")]
    StateSpaceTooLarge { states: u128, cap: usize },

    #[error("state (t={t}, w={w:?}) is not in the value table")]
    MissingState { t: usize, w: Vec<u32> },

    #[error("feature layout mismatch: model expects {expected}, got {got}")]
    LayoutMismatch { expected: String, got: String },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported format `{found}` (expected `{expected}`)")]
    Format { expected: String, found: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
