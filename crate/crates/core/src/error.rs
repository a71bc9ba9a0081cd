use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not factorizable at any jitter level (largest tried: {max_jitter:e})")]
    NotFactorizable { max_jitter: f64 },

    #[error("matrix is not symmetric: |A - A^T|_max = {deviation:e} exceeds {tolerance:e}")]
    AsymmetricInput { deviation: f64, tolerance: f64 },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("extension is not positive definite: residual variance {residual:e} below floor {floor:e}")]
    NotPositiveDefinite { residual: f64, floor: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("quadrature too coarse: orthonormality error {error:e}")]
    QuadratureTooCoarse { error: f64 },

    #[error("duplicate inducing point at rows {first} and {second}")]
    DuplicateInducingPoint { first: usize, second: usize },

    #[error("power iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("negative predictive variance {0:e}")]
    NegativeVariance(f64),

    #[error("numerical inconsistency: {quantity} = {value:e} is outside its audit tolerance")]
    NumericalInconsistency { quantity: &'static str, value: f64 },

    #[error("dense computation with N = {n} exceeds the dense limit {limit}")]
    DenseLimitExceeded { n: usize, limit: usize },

    #[error("cannot select {m} items from {n}")]
    MTooLarge { m: usize, n: usize },

    #[error("kernel matrix has rank below {wanted}: no candidate with positive gain after {selected} selections")]
    DegenerateKernel { wanted: usize, selected: usize },

    #[error("enumeration of C({n}, {m}) subsets exceeds the limit {limit}")]
    EnumerationTooLarge { n: usize, m: usize, limit: u64 },

    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),

    #[error("confidence delta must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),

    #[error("lambda_max {lambda_max:e} exceeds trace {trace:e}")]
    OrderingViolation { lambda_max: f64, trace: f64 },

    #[error("schedule exponent {exponent} >= 1: order {order} is too small for a sublinear schedule")]
    OrderTooSmall { order: u32, exponent: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
