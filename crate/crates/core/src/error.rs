use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no Driving onset: human force never exceeds {threshold} N")]
    NoDrivingOnset { threshold: f64 },

    #[error("trial has no Contact phase")]
    MissingContact,

    #[error("segment too short: {got} samples, need at least {need}")]
    SegmentTooShort { got: usize, need: usize },

    #[error("time went backwards: {now} < {last}")]
    TimeReversed { now: f64, last: f64 },

    #[error("need at least {need} subjects per condition, {condition} has {got}")]
    InsufficientSubjects {
        condition: String,
        got: usize,
        need: usize,
    },

    #[error("class {0} missing from {1} split")]
    MissingClass(u8, &'static str),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric instability: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

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

    /// True for errors caused by bad or missing input data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::NoDrivingOnset { .. }
                | Error::MissingContact
                | Error::SegmentTooShort { .. }
                | Error::MissingClass(..)
                | Error::InsufficientSubjects { .. }
                | Error::Data(_)
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
