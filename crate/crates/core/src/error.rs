use thiserror::Error;

/// Errors produced by the reduction library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown block label `{0}`")]
    UnknownLabel(String),

    #[error("invalid block partition: {0}")]
    InvalidPartition(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("singular pivot {context}: condition number {condition:e} exceeds {limit:e}")]
    SingularPivot {
        context: String,
        condition: f64,
        limit: f64,
    },

    #[error("generalized Schur complement ill-defined: {inclusion} inclusion fails (residual {residual:e} > {threshold:e})")]
    IllDefinedComplement {
        inclusion: &'static str,
        residual: f64,
        threshold: f64,
    },

    #[error("{what} is not unitary (residual {residual:e})")]
    NotUnitary { what: String, residual: f64 },

    #[error("{what} is not Hermitian (residual {residual:e})")]
    NotHermitian { what: String, residual: f64 },

    #[error("Hudson-Parthasarathy conditions violated: {0}")]
    HpViolation(String),

    #[error("invalid channel permutation: {0}")]
    InvalidPermutation(String),

    #[error("joint dimension {requested} exceeds cap {cap}")]
    DimensionCap { requested: usize, cap: usize },

    #[error("ill-posed feedback network: N_ii - I has condition number {condition:e}")]
    IllPosedFeedback { condition: f64 },

    #[error("structural condition violated: {0}")]
    Structure(String),

    #[error("fast-decoupling condition violated: |L_f| = {l_fast:e}, |N_sf| = {n_sf:e}, |N_fs| = {n_fs:e}")]
    FastDecoupling { l_fast: f64, n_sf: f64, n_fs: f64 },

    #[error("kernel condition on Y-hat violated: |P_s Yhat| = {slow_left:e}, |Yhat P_s| = {slow_right:e}, cond(Yhat_ff) = {fast_condition:e}")]
    KernelCondition {
        slow_left: f64,
        slow_right: f64,
        fast_condition: f64,
    },

    #[error("{path} disagrees with its cross-check: deviation {deviation:e} > {threshold:e}")]
    PathMismatch {
        path: &'static str,
        deviation: f64,
        threshold: f64,
    },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("propagation accuracy: trace drift {drift:e} exceeds {limit:e}")]
    PropagationAccuracy { drift: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
