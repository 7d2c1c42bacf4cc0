//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by matrix algebra, state validation and the analysis
/// pipelines. Classification outcomes are never errors; this type covers
/// genuine misuse (dimension mismatches, invalid states) and numerical
/// preconditions (rank deficiency, zero-probability conditioning).
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or tensor-factor dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// A matrix required to be Hermitian is not, beyond tolerance.
    #[error("matrix is not Hermitian (max deviation {deviation:.3e}, tolerance {tolerance:.3e})")]
    NotHermitian { deviation: f64, tolerance: f64 },

    /// A state, channel or distribution failed its validity invariant.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// Conditioning or selective update on an event of (near-)zero mass.
    #[error("zero-probability event: {0}")]
    ZeroProbability(String),

    /// An index, setting or outcome label that does not exist.
    #[error("unknown label: {0}")]
    UnknownLabel(String),

    /// A reconstruction or fit requires a spanning set that is not spanning.
    #[error("rank-deficient {space}: rank {rank}, required {required}")]
    RankDeficient {
        space: String,
        rank: usize,
        required: usize,
    },

    /// A parameter outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Input parsed as JSON but does not have the expected shape.
    #[error("schema error: {0}")]
    Schema(String),

    /// An iterative routine failed to reach its termination criterion.
    #[error("no convergence: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
