//! Error type shared by all core modules.

use alloc::string::String;
use core::fmt;

/// Errors raised by the core algorithms.
///
/// Shape disagreements inside the autodiff graph are programming errors and
/// panic instead; this enum covers conditions reachable from valid API use
/// with bad data or bad sizes.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// 6D rotation input with a near-zero or near-parallel vector pair.
    DegenerateRotation { norm_a: f64, norm_rej: f64 },
    /// Matrix fed to `matrix_to_rot6d` is not orthonormal within tolerance.
    NotARotation { deviation: f64 },
    /// Sequence shorter than the operation requires.
    SequenceTooShort { len: usize, min: usize },
    /// A timestep outside the valid range of the schedule.
    TimestepOutOfRange { t: i64, steps: usize },
    /// Generic invalid-argument error with context.
    InvalidArgument(String),
    /// A value that must be finite was NaN or infinite.
    NonFinite { context: String },
    /// Non-finite gradient during an optimizer step, with parameter name.
    NonFiniteGradient { param: String },
    /// Dataset empty where at least one sample is required.
    EmptyDataset,
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::DegenerateRotation { norm_a, norm_rej } => write!(
                f,
                "degenerate 6d rotation input (|a1| = {norm_a:.3e}, |rejection| = {norm_rej:.3e})"
            ),
            CoreError::NotARotation { deviation } => {
                write!(f, "matrix is not orthonormal (max deviation {deviation:.3e})")
            }
            CoreError::SequenceTooShort { len, min } => {
                write!(f, "sequence of {len} frames is too short (need at least {min})")
            }
            CoreError::TimestepOutOfRange { t, steps } => {
                write!(f, "timestep {t} outside [-1, {}]", *steps as i64 - 1)
            }
            CoreError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            CoreError::NonFinite { context } => write!(f, "non-finite value in {context}"),
            CoreError::NonFiniteGradient { param } => {
                write!(f, "non-finite gradient for parameter `{param}`")
            }
            CoreError::EmptyDataset => write!(f, "dataset is empty"),
        }
    }
}

impl core::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;

/// Shorthand for `CoreError::InvalidArgument` with formatting.
#[macro_export]
macro_rules! invalid_arg {
    ($($arg:tt)*) => {
        $crate::error::CoreError::InvalidArgument(alloc::format!($($arg)*))
    };
}
