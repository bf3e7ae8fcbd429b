use thiserror::Error;

/// Errors raised by the knockoff pipeline.
///
/// Row and column positions carried by variants are 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPd { min_eigenvalue: f64 },

    #[error("covariance is not diagonal")]
    NotDiagonal,

    #[error("knockoff noise covariance is not PSD (smallest eigenvalue {min_eigenvalue:e}){}", columns_suffix(.columns))]
    PsdViolation {
        min_eigenvalue: f64,
        columns: Vec<String>,
    },

    #[error("response vector has zero norm")]
    ZeroResponse,

    #[error("OLS statistics need n > 2p (n = {n}, p = {p})")]
    Underdetermined { n: usize, p: usize },

    #[error("Gram matrix is numerically singular (condition number {condition:e})")]
    SingularGram { condition: f64 },

    #[error("lasso did not converge after {sweeps} sweeps (KKT residual {kkt_residual:e})")]
    NoConvergence { sweeps: usize, kkt_residual: f64 },

    #[error("degenerate nodewise score for column {column}")]
    DegenerateScore { column: usize },

    #[error("FDR level q = {0} is outside (0, 1)")]
    InvalidQ(f64),

    #[error("ground truth has no relevant features; power is undefined")]
    EmptyH1,

    #[error("invalid ground truth: {0}")]
    InvalidTruth(String),

    #[error("bad bivariate covariance: {0}")]
    BadCovariance(String),

    #[error("empty list of tail functions")]
    EmptyList,

    #[error("argument {value} is out of range {range}")]
    OutOfRange { value: f64, range: &'static str },

    #[error("need at least {required} replications, got {got}")]
    InsufficientReplications { required: usize, got: usize },

    #[error("degrees of freedom must be at least 3, got {0}")]
    BadDof(f64),

    #[error("requested {k} nonzero coefficients but p = {p}")]
    KTooLarge { k: usize, p: usize },

    #[error("response model needs a coefficient vector")]
    MissingBeta,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn columns_suffix(columns: &[String]) -> String {
    if columns.is_empty() {
        String::new()
    } else {
        format!("; offending columns: {}", columns.join(", "))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
