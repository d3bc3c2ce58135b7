use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate: lon={lon}, lat={lat}")]
    InvalidCoordinate { lon: f64, lat: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: line {line}: field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        field: String,
        message: String,
    },

    #[error("duplicate POI id `{0}`")]
    DuplicateId(String),

    #[error("record `{id}`: unknown category `{category}` at level {level}")]
    UnknownCategory { id: String, category: String, level: usize },

    #[error("record `{id}` has no value for granularity `{granularity}`")]
    MissingAdmin { id: String, granularity: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("reduction ratio must lie in (0, 1], got {0}")]
    InvalidRatio(f64),

    #[error("cannot form {clusters} clusters from {points} points")]
    TooManyClusters { clusters: usize, points: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

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
