use thiserror::Error;

use crate::model::TaskId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid capacity {0}: must be finite and > 0")]
    InvalidCapacity(f64),

    #[error("invalid task {id}: {reason}")]
    InvalidTask { id: TaskId, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("instance of {n} tasks exceeds the oracle cap of {cap}")]
    InstanceTooLarge { n: usize, cap: usize },

    #[error("degenerate geometry: user and server are co-located")]
    DegenerateGeometry,

    #[error("invalid radio parameter `{field}`: {reason}")]
    InvalidRadio { field: &'static str, reason: String },

    #[error("server unreachable: achievable rate is zero")]
    UnreachableServer,

    #[error("no server covers the user")]
    NoCoverage,

    #[error("internal invariant broken: {0}")]
    Internal(String),

    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },

    #[error("unknown scheduler `{0}`")]
    UnknownScheduler(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
