use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {cause}")]
    MalformedRecord { line: usize, cause: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("could not draw a fresh mask token after {retries} retries")]
    TokenExhaustion { retries: usize },

    #[error("restyle collision in instance {id}: {detail}")]
    RestyleCollision { id: String, detail: String },

    #[error("instance {id}: pool cannot supply {needed} distractor(s), only {available} eligible")]
    InsufficientPool {
        id: String,
        needed: usize,
        available: usize,
    },

    #[error("requested {requested} instances but only {available} are eligible")]
    CountTooLarge { requested: usize, available: usize },

    #[error("{source_name} source has {available} instances, {requested} requested")]
    InsufficientSource {
        source_name: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("duplicate instance id {0}")]
    DuplicateId(String),

    #[error("no prediction for instance {0}")]
    MissingPrediction(String),

    #[error("reports cover different instance ids: {0}")]
    IdMismatch(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("authentication rejected by endpoint (HTTP {status})")]
    Auth { status: u16 },

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from bad input data rather than the environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Auth { .. } | Error::Transport { .. }
        )
    }

    pub fn is_transport_error(&self) -> bool {
        matches!(self, Error::Auth { .. } | Error::Transport { .. })
    }
}
