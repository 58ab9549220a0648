//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// A config key failed to parse or landed outside its valid range.
    #[error("config error: key `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// A numerical quantity became non-finite during training or scoring.
    #[error("numerical error at step {step}: {detail}")]
    Numerical { step: usize, detail: String },

    /// Pretraining exhausted its step budget without reaching the accuracy gate.
    #[error(
        "pretraining failed: held-out greedy accuracy {reached:.4} < required {required:.4} \
         after {steps} steps"
    )]
    PretrainFailed {
        reached: f64,
        required: f64,
        steps: usize,
    },

    /// Checkpoint document declares an unsupported format version.
    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    /// Checkpoint arrays disagree with the dims they declare.
    #[error("checkpoint shape mismatch: {field} has {found} values, expected {expected}")]
    CheckpointShape {
        field: String,
        found: usize,
        expected: usize,
    },

    /// Checkpoint file is not a well-formed document.
    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),

    /// A CSV row failed to parse; names the offending row and column.
    #[error("malformed csv {path}: row {row}, column `{column}`: {detail}")]
    CsvFormat {
        path: String,
        row: usize,
        column: String,
        detail: String,
    },

    /// Two eval reports were combined that do not cover the same problem set.
    #[error("mismatched problem sets: {0}")]
    ProblemSetMismatch(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for validation/format problems, 2 for runtime or
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Config { .. }
            | Error::CheckpointVersion { .. }
            | Error::CheckpointShape { .. }
            | Error::CheckpointCorrupt(_)
            | Error::CsvFormat { .. }
            | Error::ProblemSetMismatch(_) => 1,
            Error::Numerical { .. } | Error::PretrainFailed { .. } | Error::Io { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
