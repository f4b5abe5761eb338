use thiserror::Error;

/// Errors produced by the interpolation toolkit.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("size mismatch: {what} has {found} entries, expected {expected}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {index} is not finite")]
    NonFinitePoint { index: usize },

    #[error("points {first} and {second} coincide (separation {separation:e})")]
    DuplicatePoints {
        first: usize,
        second: usize,
        separation: f64,
    },

    #[error("point {index} lies outside the domain")]
    OutsideDomain { index: usize },

    #[error("generator `{generator}` is not supported on {domain}")]
    UnsupportedGenerator { generator: String, domain: String },

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("|t| = {0} exceeds 1")]
    ArgumentOutOfRange(f64),

    #[error(
        "Gram matrix is not numerically positive definite: pivot {pivot} failed \
         (condition estimate {condition_estimate:e})"
    )]
    NotPositiveDefinite {
        pivot: usize,
        condition_estimate: f64,
    },

    #[error("kernel is not admissible: {0}")]
    InadmissibleKernel(String),

    #[error("mean component not annihilated; H_Lambda_phi membership fails (c0 = {c0:e})")]
    MeanNotAnnihilated { c0: f64 },

    #[error("target outside native space: {0}")]
    OutsideNativeSpace(String),

    #[error(
        "minimal-norm property violated: residual norm^2 {residual:e} for target norm^2 {target:e}"
    )]
    MinimalNormViolation { residual: f64, target: f64 },

    #[error("too few usable levels for a slope fit: {usable} (need at least 3)")]
    TooFewLevels { usable: usize },

    #[error("unknown key `{key}` in {context}")]
    UnknownKey { key: String, context: String },

    #[error("malformed {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
