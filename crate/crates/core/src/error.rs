use alloc::string::String;
use thiserror::Error;

/// Errors raised by the evidential core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    /// A value that must be finite (or otherwise well-formed) was not.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A numerical routine broke down (non-SPD matrix, non-finite intermediate).
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Parameters outside the domain where a quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Caller passed mismatched shapes or an unsupported option.
    #[error("usage error: {0}")]
    Usage(String),
    /// Not enough (or collinear) correspondences for an alignment.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    /// A reduction over zero valid elements.
    #[error("empty input: {0}")]
    EmptyInput(String),
    /// A statistic that is undefined for the given data (e.g. constant ranks).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    /// The uncertainty source does not define a predictive likelihood.
    #[error("unsupported likelihood: {0}")]
    UnsupportedLikelihood(String),
    /// Invalid configuration values.
    #[error("configuration error: {0}")]
    Config(String),
    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
}

pub type Result<T, E = CoreError> = core::result::Result<T, E>;
