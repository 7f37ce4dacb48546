use thiserror::Error;

pub type Result<T> = std::result::Result<T, HawkesError>;

#[derive(Debug, Error)]
pub enum HawkesError {
    /// An argument fell outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    /// A target event has zero (or negative) intensity under the model, so the
    /// log-likelihood is minus infinity.
    #[error("zero intensity for target {target} at event {index} (t = {time})")]
    ZeroIntensity {
        target: usize,
        index: usize,
        time: f64,
    },

    #[error("supercritical branching structure: {0}")]
    Supercritical(String),

    /// A statistic is undefined for the sample (constant series, zero variance).
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("calibration infeasible: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HawkesError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidParameters(msg.into())
    }
}
