use std::path::PathBuf;

/// Errors raised anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("unknown configuration key `{key}` (line {line})")]
    UnknownKey { key: String, line: usize },

    #[error("malformed config line {line}: {text}")]
    ConfigSyntax { line: usize, text: String },

    #[error("emotion `{emotion}` has {available} utterances, {requested} requested")]
    InsufficientUtterances {
        emotion: String,
        available: usize,
        requested: usize,
    },

    #[error("{table} lookup out of range: index {index}, table size {size}")]
    Lookup {
        table: &'static str,
        index: usize,
        size: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("{failed} of {total} sweep cells failed")]
    CellsFailed { failed: usize, total: usize },

    #[error("gradient check failed: {0}")]
    GradientMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("bad magic in {path}: expected {expected:?}")]
    Magic {
        path: PathBuf,
        expected: &'static str,
    },

    #[error("unsupported format version {version} in {path}")]
    Version { path: PathBuf, version: u32 },

    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("malformed manifest {path} line {line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. }
                | Error::UnknownKey { .. }
                | Error::ConfigSyntax { .. }
                | Error::Contract(_)
                | Error::InsufficientUtterances { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
