use std::fmt;

pub type TensorResult<T> = Result<T, TensorError>;

/// Errors raised by tensor construction, kernels, the tape and the optimizer.
#[derive(Clone, Debug, PartialEq)]
pub enum TensorError {
    /// A shape contained a zero dimension or was empty.
    InvalidShape { shape: Vec<usize> },
    /// Flat data does not match the product of the shape.
    DataLength { expected: usize, got: usize },
    /// Two operands cannot be combined by `op`.
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// Requested axis does not exist.
    AxisOutOfRange { axis: usize, rank: usize },
    /// An index (token id, class id) is not below its bound.
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    /// Every key was masked out for some attention query row.
    FullyMaskedRow { batch: usize, row: usize },
    /// `backward` was called on something other than a single-element tensor.
    NonScalarLoss { shape: Vec<usize> },
    /// A cross-entropy call had no non-ignored targets.
    NoTargets,
    /// Optimizer state or gradients disagree with the parameter set.
    Contract(String),
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidShape { shape } => {
                write!(f, "invalid shape {shape:?}: dimensions must be positive")
            }
            Self::DataLength { expected, got } => {
                write!(f, "data length mismatch: expected {expected}, got {got}")
            }
            Self::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: shape mismatch between {left:?} and {right:?}")
            }
            Self::AxisOutOfRange { axis, rank } => {
                write!(f, "axis {axis} out of range for rank {rank}")
            }
            Self::IndexOutOfRange { op, index, bound } => {
                write!(f, "{op}: index {index} out of range (bound {bound})")
            }
            Self::FullyMaskedRow { batch, row } => {
                write!(f, "attention row {row} of batch {batch} has every key masked")
            }
            Self::NonScalarLoss { shape } => {
                write!(f, "backward needs a scalar loss, got shape {shape:?}")
            }
            Self::NoTargets => write!(f, "cross-entropy received no non-ignored targets"),
            Self::Contract(msg) => write!(f, "contract violation: {msg}"),
        }
    }
}

impl std::error::Error for TensorError {}
