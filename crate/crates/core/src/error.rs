use std::io;

use thiserror::Error;

/// Errors produced anywhere in the separation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("sample interval mismatch ({left} vs {right})")]
    DtMismatch { left: f64, right: f64 },

    #[error("series too short: {what} needs at least {needed} samples, got {got}")]
    TooShort {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("series has zero variance and cannot be normalized")]
    ZeroVariance,

    #[error("trajectory diverged at step {step}: |coordinate| = {value:e} exceeds bound {bound:e}; parameters are not physical")]
    Divergence { step: usize, value: f64, bound: f64 },

    #[error("recurrent matrix is all zero after masking (sparsity {sparsity}); lower the sparsity or change the seed")]
    ZeroReservoir { sparsity: f64 },

    #[error("spectral radius did not converge after {iterations} iterations (last estimate {estimate}, relative change {change:e})")]
    NoConvergence {
        iterations: usize,
        estimate: f64,
        change: f64,
    },

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("readouts belong to different reservoirs ({left:016x} vs {right:016x})")]
    ReservoirMismatch { left: u64, right: u64 },

    #[error("transfer function is not Hermitian (max asymmetry {0:e}); the filter would not be real")]
    NotHermitian(f64),

    #[error("undefined normalized error: the scaling denominator is zero")]
    ZeroDenominator,

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
