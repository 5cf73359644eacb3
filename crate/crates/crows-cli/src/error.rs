//! Error taxonomy for the command-line tools.
//!
//! Every failure is classified for the process exit code: configuration
//! problems (bad config file, invalid hyperparameters, bad usage) exit 1,
//! data problems (malformed CSV, invalid bars, not enough data for the
//! requested experiment) exit 2, and runtime failures (IO, non-finite
//! losses) exit 3.

use crows_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("runtime: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            // Caller-supplied knobs out of range.
            CoreError::BadParameter { .. } | CoreError::DimensionMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            // Anything wrong with the market data itself.
            CoreError::InvalidBar { .. }
            | CoreError::EpisodeTooShort { .. }
            | CoreError::NotNormalized
            | CoreError::NoFeatures
            | CoreError::AllVolumesZero
            | CoreError::NonPositiveBasePrice { .. }
            | CoreError::MissingColumn(_)
            | CoreError::DuplicateColumn(_)
            | CoreError::EmptyFeatureVector
            | CoreError::InsufficientData { .. } => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
