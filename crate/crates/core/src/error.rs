use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("covariance matrix is singular after jitter")]
    SingularCovariance,

    #[error("logistic regression has no finite maximum (separation)")]
    Separation,

    #[error("non-positive long-run variance estimate ({0})")]
    NonPositiveVariance(f64),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("non-finite log-likelihood contribution at group {group}, time {time}")]
    NonFiniteLikelihood { group: usize, time: usize },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("{path}:{line}: {message}")]
    Data {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
