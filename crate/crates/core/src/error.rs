use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// One or more configuration values violate an invariant. Each entry
    /// names the offending key.
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("failed to parse scenario: {0}")]
    Parse(String),

    #[error("bad override `{0}`: expected key=value")]
    BadOverride(String),

    #[error("pair distance must be positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("velocity grid is empty")]
    EmptyGrid,

    #[error("cell `{cell}` seed {seed} failed: {source}")]
    BatchCell {
        cell: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
