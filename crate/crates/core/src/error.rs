use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped so that front ends can tell malformed input
/// ([`Error::is_validation`]) from failures that happen while processing
/// well-formed input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("annotation error: {0}")]
    Annotation(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error at row {row}, column `{column}`: {message}")]
    Ingest {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("statistics error: {0}")]
    Stats(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// True when the error stems from invalid or missing input rather than
    /// from a failure during computation.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Format { .. }
            | Error::Geometry(_)
            | Error::Annotation(_)
            | Error::State(_)
            | Error::Config(_)
            | Error::Ingest { .. }
            | Error::Json(_)
            | Error::Csv(_) => true,
            Error::Calibration(_) | Error::Data(_) | Error::Stats(_) => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
