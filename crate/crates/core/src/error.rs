use thiserror::Error;

/// Every failure the engine can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("presentation is not integral: {0}")]
    Integrality(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("internal error: {0}")]
    Internal(String),

    /// A count series came out non-integral or negative. Exact arithmetic
    /// admits no roundoff, so this always indicates a defect upstream.
    #[error("consistency failure: {0}")]
    Consistency(String),

    #[error("finite quotient invalid at p = {p}, e = {e}: {reason}")]
    QuotientInvalid { p: u64, e: u32, reason: String },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("indeterminate: {0}")]
    Indeterminate(String),

    #[error("missing local data for {0}")]
    Gap(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
