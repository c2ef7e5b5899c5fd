use std::path::PathBuf;

use thiserror::Error;

/// Failure of an experiment run. Each variant maps to a process exit code.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("integration broke down at t = {time:e} (boundary gap {gap:e})")]
    Breakdown { time: f64, gap: f64 },

    #[error("suite violation: {0}")]
    SuiteViolation(String),

    #[error(transparent)]
    Numerical(#[from] dlra_core::Error),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BREAKDOWN: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        use dlra_core::Error as E;
        match self {
            Self::Config(_) | Self::Read { .. } | Self::Json { .. } => EXIT_CONFIG,
            Self::Numerical(E::InvalidArgument(_) | E::InvalidInitialState(_) | E::DimensionMismatch { .. }) => {
                EXIT_CONFIG
            }
            Self::Breakdown { .. } => EXIT_BREAKDOWN,
            Self::SuiteViolation(_) => EXIT_VIOLATION,
            Self::Write { .. } | Self::Numerical(_) => EXIT_INTERNAL,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

pub fn config_error(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}
