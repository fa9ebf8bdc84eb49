use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The number of time points is too large for exhaustive enumeration.
    #[error("refusing to enumerate 2^{} orders (T = {t} exceeds the limit {limit})", .t - 1)]
    TooManyOrders { t: usize, limit: usize },

    #[error("invalid order: {0}")]
    InvalidOrder(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    /// Observation payload and kernel do not fit together.
    #[error("data mismatch: {0}")]
    Mismatch(String),

    /// A likelihood or density evaluated to a non-finite value.
    #[error("evaluation failure: {0}")]
    Evaluation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
