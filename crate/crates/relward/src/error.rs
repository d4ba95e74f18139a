//! Error taxonomy shared by the library and the CLI.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed container or record (bad magic, truncated chunk, unparsable line).
    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    /// Structurally valid file whose declared parameters we do not handle.
    #[error("unsupported format in {path}: {field} is {value}, expected {expected}")]
    UnsupportedFormat { path: PathBuf, field: &'static str, value: String, expected: &'static str },

    /// Caller passed values outside an operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An internal contract between pipeline stages was violated.
    #[error("contract violation at {stage}: {detail}")]
    Contract { stage: &'static str, detail: String },

    /// Input data is degenerate for the requested operation (e.g. silent clip).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Dataset-level problem (missing manifest, empty set, unreadable clip).
    #[error("data error: {0}")]
    Data(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn contract(stage: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract { stage, detail: detail.into() }
    }

    /// Process exit code for the CLI: 1 for usage errors, 2 for data/contract errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Argument(_) => 1,
            _ => 2,
        }
    }
}
