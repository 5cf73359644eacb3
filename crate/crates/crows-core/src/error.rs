//! Crate-wide error type.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes do not conform for the named op.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Shape and data length disagree when constructing a tensor.
    BadTensor { shape: Vec<usize>, len: usize },
    /// `backward` called on a non-scalar tensor.
    NonScalarLoss { shape: Vec<usize> },
    /// A bar violates the OHLCV invariants (row index is within the episode).
    InvalidBar {
        index: usize,
        reason: &'static str,
    },
    /// Episode has too few usable rows for the requested operation.
    EpisodeTooShort { have: usize, need: usize },
    /// Operation requires a normalized episode.
    NotNormalized,
    /// Operation requires the feature matrix to be computed.
    NoFeatures,
    /// Every bar of the episode has zero volume.
    AllVolumesZero,
    /// First close of the episode is not a positive price.
    NonPositiveBasePrice { close: f64 },
    /// A named feature column does not exist.
    MissingColumn(String),
    /// A feature column with this name already exists.
    DuplicateColumn(String),
    /// `step` called on a finished environment.
    StepAfterDone,
    /// A hyperparameter or rule violates its documented range.
    BadParameter { what: &'static str },
    /// Input dimensions do not match the agent configuration.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// Dataset construction produced rows with no features.
    EmptyFeatureVector,
    /// Not enough rows or features to fit a model.
    InsufficientData { rows: usize, features: usize },
    /// A loss or gradient became non-finite during training.
    NonFiniteLoss { iteration: usize, detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shapes {lhs:?} and {rhs:?} do not conform")
            }
            Error::BadTensor { shape, len } => {
                write!(f, "tensor shape {shape:?} does not hold {len} values")
            }
            Error::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            Error::InvalidBar { index, reason } => {
                write!(f, "invalid bar at row {index}: {reason}")
            }
            Error::EpisodeTooShort { have, need } => {
                write!(f, "episode too short: {have} usable rows, need {need}")
            }
            Error::NotNormalized => write!(f, "episode is not normalized"),
            Error::NoFeatures => write!(f, "episode has no feature matrix"),
            Error::AllVolumesZero => write!(f, "all volumes are zero"),
            Error::NonPositiveBasePrice { close } => {
                write!(f, "first close {close} is not a positive price")
            }
            Error::MissingColumn(name) => write!(f, "no feature column named {name:?}"),
            Error::DuplicateColumn(name) => {
                write!(f, "feature column {name:?} already exists")
            }
            Error::StepAfterDone => write!(f, "step called after episode end"),
            Error::BadParameter { what } => write!(f, "invalid parameter: {what}"),
            Error::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected dimension {expected}, got {got}"),
            Error::EmptyFeatureVector => {
                write!(f, "dataset rows would have empty feature vectors")
            }
            Error::InsufficientData { rows, features } => {
                write!(f, "insufficient data: {rows} rows x {features} features")
            }
            Error::NonFiniteLoss { iteration, detail } => {
                write!(f, "non-finite loss at iteration {iteration}: {detail}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
