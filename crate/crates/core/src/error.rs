use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty horizon")]
    EmptyHorizon,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("stale grounding")]
    StaleGrounding,

    #[error("{path}:{line}:{column}: {message}")]
    ScenarioParse { path: PathBuf, line: usize, column: usize, message: String },

    #[error("{path}: invalid field `{field}`: {message}")]
    ScenarioInvalid { path: PathBuf, field: String, message: String },

    #[error("invalid safety config: {0}")]
    InvalidConfig(String),

    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error")]
    Serde(#[from] serde_json::Error),

    #[error("csv error")]
    Csv(#[from] csv::Error),

    #[error("image error")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
