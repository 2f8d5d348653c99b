//! Error type shared across the numerics core.

use alloc::string::String;
use core::fmt;

use crate::train::LossTrace;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input contained NaN or infinity where a finite value is required.
    NonFiniteInput { what: &'static str },
    /// A dimension index was outside `0..dim`.
    IndexOutOfRange { index: usize, dim: usize },
    /// Two containers that must agree in length did not.
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    /// An operation that averages over samples received zero samples.
    EmptyBatch,
    /// Schedule construction violated `sigma_first >= sigma_last > 0`, or
    /// asked for fewer than two levels.
    InvalidSchedule { reason: &'static str },
    /// A covariance matrix was not symmetric positive definite.
    InvalidCovariance,
    /// Model/objective capability mismatch (e.g. an exact-score objective on
    /// a field that only exposes conditional scores).
    Unsupported { what: &'static str },
    /// A Langevin iterate left the trust region `|x| <= 1e6`.
    SamplerDiverged { sample: usize, dim: usize, step: usize },
    /// The training loss became non-finite; the trace up to that point is
    /// attached.
    TrainingDiverged { stage: usize, iteration: usize, trace: LossTrace },
    /// The score model was fitted against an older encoder state than the one
    /// whose entropy gradient is being requested.
    StaleScoreModel { fitted: u64, current: u64 },
    /// Checkpoint or configuration payload failed validation.
    InvalidArgument { what: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFiniteInput { what } => write!(f, "non-finite input: {what}"),
            Error::IndexOutOfRange { index, dim } => {
                write!(f, "dimension index {index} out of range for dim {dim}")
            }
            Error::DimensionMismatch { what, expected, got } => {
                write!(f, "{what}: expected length {expected}, got {got}")
            }
            Error::EmptyBatch => write!(f, "empty batch"),
            Error::InvalidSchedule { reason } => write!(f, "invalid noise schedule: {reason}"),
            Error::InvalidCovariance => write!(f, "covariance is not positive definite"),
            Error::Unsupported { what } => write!(f, "unsupported operation: {what}"),
            Error::SamplerDiverged { sample, dim, step } => write!(
                f,
                "sampler diverged at sample {sample}, dimension {dim}, step {step}"
            ),
            Error::TrainingDiverged { stage, iteration, .. } => {
                write!(f, "training diverged at stage {stage}, iteration {iteration}")
            }
            Error::StaleScoreModel { fitted, current } => write!(
                f,
                "score model fitted for encoder version {fitted}, encoder is at {current}"
            ),
            Error::InvalidArgument { what } => write!(f, "invalid argument: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
