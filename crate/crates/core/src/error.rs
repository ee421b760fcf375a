use thiserror::Error;

/// Errors raised by the model, samplers, scoring and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate region: normalizing mass {mass:e} for block {block} is below 1e-10")]
    DegenerateRegion { block: usize, mass: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("CAR prior is improper for rho = {rho} (must lie in [0, 0.25))")]
    Propriety { rho: f64 },

    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { iteration: usize, what: String },

    #[error("forecast unavailable: {0}")]
    Unavailable(String),

    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error("degenerate scenario: region acceptance rate {rate:e} is below 1e-3")]
    DegenerateScenario { rate: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("decode error at byte offset {offset}: {msg}")]
    Decode { offset: u64, msg: String },

    #[error("archive format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("too many malformed rows: {rejected} of {total}")]
    Malformed { rejected: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
