use thiserror::Error;

/// Errors surfaced by the library.
///
/// The three variants map onto the process exit codes used by the CLI:
/// input problems (1), convergence trouble (2, reported through
/// [`crate::estimate::FitResult::converged`] rather than an error), and
/// numeric failures (3).
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument fell outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed or unusable input data (files, columns, shapes).
    #[error("input error: {0}")]
    Input(String),
    /// A numeric procedure failed to reach its target accuracy.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
