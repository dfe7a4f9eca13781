use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the sensing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is outside the range an operation supports.
    #[error("configuration error: {0}")]
    Config(String),

    /// Scenario geometry is degenerate (e.g. a scatterer on top of a receiver).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Input data does not satisfy the operation's preconditions.
    #[error("input error: {0}")]
    Input(String),

    /// The least-squares system could not be solved.
    #[error("solver error: {0}")]
    Solver(String),

    /// A numeric argument is outside the mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// No respiration line stands above the spectral noise floor.
    #[error("no respiration detected (peak/floor ratio {ratio:.2})")]
    NoRespiration { ratio: f64 },

    /// A binary artifact failed to parse.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's configuration or inputs rather
    /// than by a runtime failure. A missing input file counts as usage.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_) | Error::Geometry(_) | Error::Domain(_) | Error::Json(_) => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
