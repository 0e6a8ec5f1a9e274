use thiserror::Error;

/// Errors surfaced by the adjustment pipeline.
#[derive(Debug, Error)]
pub enum EcapError {
    /// An argument lies outside the mathematical domain of an operation
    /// (e.g. excess certainty of an estimate that is exactly 0 or 1).
    #[error("domain error: {0}")]
    Domain(String),

    /// Too few observations to carry out the requested computation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Inconsistent or incomplete configuration (e.g. a likelihood search
    /// requested without observed outcomes).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical procedure failed to converge or produced a singular system.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, EcapError>;
