//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CtdError>;

#[derive(Debug, Error)]
pub enum CtdError {
    #[error("shape mismatch: expected modes {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("direction {direction} out of range for {dims}-directional tensor")]
    InvalidDirection { direction: usize, dims: usize },

    #[error("operation requires separation rank >= 1")]
    EmptyRank,

    #[error("dense expansion of {size} entries exceeds oracle cap {cap}")]
    OracleCapExceeded { size: u128, cap: usize },

    #[error("relative error undefined: reference tensor has zero norm")]
    ZeroReference,

    #[error("condition number undefined for a zero matrix")]
    ZeroMatrix,

    #[error("matrix is not Gram-like: {0}")]
    NotGramLike(String),

    #[error("rank-deficient input: {0}")]
    RankDeficient(String),

    #[error("sketched system has no singular values above the cutoff")]
    DegenerateSketch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("mesh resolution must satisfy n >= 2, got {0}")]
    MeshTooCoarse(usize),

    #[error("requested {requested} KL modes but only {available} are available")]
    KlPoolExhausted { requested: usize, available: usize },

    #[error("coefficient length {got} does not match node count {expected}")]
    CoefficientLength { expected: usize, got: usize },

    #[error("coefficient field not strictly positive: min sampled value {0}")]
    CoefficientNotPositive(f64),

    #[error("damping selection failed: {0}")]
    DampingSearch(String),

    #[error("fixed-point iteration diverged at iteration {iteration} (residual {residual:.3e})")]
    Divergence { iteration: usize, residual: f64 },

    #[error("config error: {0}")]
    ConfigFile(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
