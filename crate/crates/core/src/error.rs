use std::path::PathBuf;

use thiserror::Error;

/// One rejected input line.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct LineReject {
    pub path: PathBuf,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(
        "{path}: {rejected} of {total} lines malformed (limit {limit_pct:.2}%); first: {}",
        .rejects.first().map(|r| format!("line {}: {}", r.line, r.reason)).unwrap_or_default()
    )]
    TooManyRejects {
        path: PathBuf,
        rejected: usize,
        total: usize,
        limit_pct: f64,
        rejects: Vec<LineReject>,
    },

    #[error("duplicate {kind} {id}")]
    DuplicateId { kind: &'static str, id: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("singular normal equations at lambda = {lambda}; use lambda > 0")]
    Singular { lambda: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Internal,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Internal => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Internal => "internal",
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::TooManyRejects { .. }
            | Error::DuplicateId { .. }
            | Error::InvalidInput(_)
            | Error::Degenerate(_)
            | Error::Singular { .. } => ErrorClass::Data,
            Error::Json(_) => ErrorClass::Internal,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), message: message.into() }
    }
}
