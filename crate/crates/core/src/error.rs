use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: channel `{channel}` has rate {value} at state {state:?}")]
    InvalidRate {
        channel: String,
        state: Vec<i64>,
        value: f64,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("event budget of {budget} exceeded at time {time} (suspected explosion)")]
    EventBudgetExceeded { budget: u64, time: f64 },
    #[error("non-finite vector field value at t = {time}")]
    NonFiniteField { time: f64 },
    #[error("exit window not bracketed: {0}")]
    WindowNotBracketed(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no admissible A below {cap}: try a larger eps or a smaller t0")]
    NoAdmissibleA { cap: f64 },
    #[error("hypergraph generation gave up after {retries} rejected pairings")]
    RetryCapExceeded { retries: u64 },
    #[error("thinning envelope {envelope} exceeded by rate {rate} at t = {time}")]
    EnvelopeViolated { envelope: f64, rate: f64, time: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
