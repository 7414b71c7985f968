use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violated a documented constraint.
    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    /// A configured hard limit would have been exceeded.
    #[error("{what} exceeded the configured cap of {cap}")]
    Resource { what: &'static str, cap: usize },

    /// A numerical routine failed to reach its target.
    #[error("numerical failure in {routine}: {reason}")]
    Numerical { routine: &'static str, reason: String },

    /// The request is well formed but outside what the implementation supports.
    #[error("unsupported: {0}")]
    Capability(String),

    /// Two observations coincide in space and time; no joint density exists.
    #[error("degenerate pair: {0}")]
    DegeneratePair(String),

    /// No observation pairs of a field match the requested lag.
    #[error("no observation pairs: {0}")]
    NoMatchingPairs(String),
}

impl Error {
    pub(crate) fn validation(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(routine: &'static str, reason: impl Into<String>) -> Self {
        Error::Numerical {
            routine,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
