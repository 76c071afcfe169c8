//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong in the library.
///
/// Variants are grouped loosely: shape/validation problems, numerical
/// breakdowns, and empty-input conditions that callers usually want to
/// handle rather than propagate.
#[derive(Debug, Error)]
pub enum Error {
    /// Two operands disagree on a dimension that must match.
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// An operation needs a shape relation that does not hold, e.g. a
    /// code length at least as large as the signal dimension.
    #[error("unsupported shape: {context} (required {required}, got {got})")]
    ShapeUnsupported {
        context: &'static str,
        required: String,
        got: String,
    },

    /// A parameter is outside its legal range.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// The transform matrix is (numerically) rank deficient, so the
    /// log-determinant regularizer and related solves are undefined.
    #[error("singular transform: smallest singular value {sigma_min:.3e} below threshold")]
    SingularTransform { sigma_min: f64 },

    /// A linear system that must be solvable is numerically singular.
    #[error("singular linear system in {context}")]
    SingularSystem { context: &'static str },

    /// A codebook column violates the sparsity budget it is declared with.
    #[error("infeasible codebook: column {column} has {nnz} nonzeros, expected {expected}")]
    InfeasibleCodebook {
        column: usize,
        nnz: usize,
        expected: usize,
    },

    /// Requested noise entries exceed the free positions of a code.
    #[error("ambiguation budget exceeded: requested {requested} noise entries, only {available} positions free")]
    AmbiguationBudgetExceeded { requested: usize, available: usize },

    /// Query-side noise must not exceed the database noise level.
    #[error("query noise {s_q} exceeds database noise level {s_p}")]
    QueryNoiseExceedsDatabaseNoise { s_q: usize, s_p: usize },

    /// A noise model cannot be built from an empty codebook.
    #[error("empty codebook: {context}")]
    EmptyCodebook { context: &'static str },

    /// A ball query returned no candidates, so nothing can be sampled.
    #[error("empty neighborhood: no stored code within the query radius")]
    EmptyNeighborhood,

    /// Recall is undefined without ground-truth neighbors.
    #[error("empty ground truth: recall is undefined")]
    EmptyGroundTruth,

    /// Normalized error against a zero reference vector is undefined.
    #[error("zero reference vector: normalized error is undefined")]
    ZeroReference,

    /// All pairwise distances coincide; histogram comparison is undefined.
    #[error("degenerate distances: all pairwise distances are equal")]
    DegenerateDistances,

    /// An operation over a query set got an empty set.
    #[error("empty query set: {context}")]
    EmptyQuerySet { context: &'static str },
}

pub type Result<T> = std::result::Result<T, Error>;
