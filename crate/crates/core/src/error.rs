//! Shared error type for the whole crate.

use thiserror::Error;

/// Errors produced by matrix kernels, model construction, scheme
/// validation, and the bound evaluators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Operand shapes are incompatible with the requested operation.
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    /// A non-finite value (NaN or infinity) was about to enter a matrix
    /// or vector.
    #[error("non-finite entry {value} at position {index} in {context}")]
    NonFinite {
        context: &'static str,
        index: usize,
        value: f64,
    },

    /// Symmetry check failed beyond the stated tolerance.
    #[error("matrix is not symmetric: |A[{row}][{col}] - A[{col}][{row}]| = {gap:.3e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    /// Cholesky factorization hit a non-positive pivot.
    #[error("matrix is not positive definite: pivot {pivot:.3e} at index {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    /// A retention probability left the open interval (0, 1).
    #[error("retention probability must lie strictly inside (0, 1), got {value}")]
    InvalidProbability { value: f64 },

    /// An iterative computation ran out of its iteration budget.
    #[error("{what} did not converge within {limit} steps (last residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        limit: usize,
        residual: f64,
    },

    /// An exhaustive enumeration would exceed the configured state budget.
    #[error("{what} needs {required} states, over the budget of {budget}")]
    BudgetExceeded {
        what: &'static str,
        required: u128,
        budget: u128,
    },

    /// The design matrix has a zero column, so diagonal Gram entries are
    /// not all positive.
    #[error("design has a zero column at index {col}; diagonal Gram entries must be positive")]
    NotReducedForm { col: usize },

    /// A step-size gate failed (the iteration would not be stable).
    #[error("step size gate failed: {gate} = {value:.6e} must be below {limit:.6e}")]
    StepSizeViolation {
        gate: &'static str,
        value: f64,
        limit: f64,
    },

    /// A hypothesis beyond the step-size gates is not met by the supplied
    /// instance.
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    /// A matrix that must be invertible is singular to working precision.
    #[error("{context}: matrix is singular to working precision")]
    NotInvertible { context: &'static str },

    /// The equal-column-norm spectral representation was requested for a
    /// design whose columns do not share a common norm.
    #[error(
        "columns {col_a} and {col_b} have squared norms {norm_a} and {norm_b}; \
         the spectral representation needs equal column norms"
    )]
    UnequalColumnNorms {
        col_a: usize,
        col_b: usize,
        norm_a: f64,
        norm_b: f64,
    },

    /// Config-level validation failure (bad field value, unknown name).
    #[error("invalid configuration at {path}: {message}")]
    InvalidConfig { path: String, message: String },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
