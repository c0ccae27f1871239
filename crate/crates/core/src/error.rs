//! Error type shared by every module in the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A generative model produced a non-finite rate or probability.
    #[error("degenerate model: {0}")]
    ModelDegenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("row {row}: cannot parse {field} value {value:?}")]
    UnparseableNumeric {
        row: usize,
        field: String,
        value: String,
    },

    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },

    #[error("row {row}: duplicate session for user {user_id:?} day {day} ({time_of_day})")]
    DuplicateRecord {
        row: usize,
        user_id: String,
        day: u32,
        time_of_day: &'static str,
    },

    #[error("log posterior is not finite: {0}")]
    Domain(String),

    #[error("fit failed after {restarts} restarts: {diagnostics}")]
    FitFailure { restarts: usize, diagnostics: String },

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("malformed config: {0}")]
    Config(String),

    #[error("user {user} decision {t}: {source}")]
    Study {
        user: usize,
        t: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep cell (E={e}, xi1={xi1}, xi2={xi2}) trial {trial}: {source}")]
    Sweep {
        e: f64,
        xi1: f64,
        xi2: f64,
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
