use thiserror::Error;

/// Errors raised by the estimation, scoring and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("integrand is not finite at x = {x}")]
    NonFiniteIntegrand { x: f64 },

    #[error("training sample is empty")]
    EmptyTrainingSet,

    #[error("need at least {need} training points, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("holdout sample is empty")]
    EmptyHoldout,

    #[error("invalid split sizes: n = {n}, n1 = {n1} (need 1 <= n1 < n)")]
    BadSplitSizes { n: usize, n1: usize },

    #[error("no procedures to select from")]
    NoProcedures,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid theorem inputs: {0}")]
    InvalidInputs(String),

    #[error("mismatched inputs: {0}")]
    MismatchedInputs(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
