use thiserror::Error;

/// Errors raised by the estimators and their building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate stencil: {0}")]
    DegenerateStencil(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("not available: {0}")]
    NotAvailable(String),

    #[error("unsupported distribution: {0}")]
    UnsupportedDistribution(String),

    #[error("model evaluation failed: {0}")]
    Evaluation(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// True for errors caused by the caller's inputs rather than by the computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::SizeLimit(_)
                | Error::NotAvailable(_)
                | Error::UnsupportedDistribution(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
