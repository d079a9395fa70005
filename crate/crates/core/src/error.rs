use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LevyError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },
    /// A parameter violates a precondition.
    #[error("parameter error in {op}: {msg}")]
    Parameter { op: &'static str, msg: String },
    /// Breakpoints are not a valid partition of [0, 1].
    #[error("partition error: {0}")]
    Partition(String),
    /// A factorisation or solver failed.
    #[error("numerical error in {op}: {msg}")]
    Numerical { op: &'static str, msg: String },
    /// Array shapes do not match.
    #[error("shape error in {op}: {msg}")]
    Shape { op: &'static str, msg: String },
    /// A requested size exceeds the supported limit.
    #[error("resource error in {op}: {msg}")]
    Resource { op: &'static str, msg: String },
    /// Malformed input data (CSV tables, kernel specs).
    #[error("parse error: {0}")]
    Parse(String),
}

impl LevyError {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        LevyError::Domain { op, msg: msg.into() }
    }

    pub(crate) fn parameter(op: &'static str, msg: impl Into<String>) -> Self {
        LevyError::Parameter { op, msg: msg.into() }
    }

    pub(crate) fn numerical(op: &'static str, msg: impl Into<String>) -> Self {
        LevyError::Numerical { op, msg: msg.into() }
    }

    pub(crate) fn shape(op: &'static str, msg: impl Into<String>) -> Self {
        LevyError::Shape { op, msg: msg.into() }
    }

    pub(crate) fn resource(op: &'static str, msg: impl Into<String>) -> Self {
        LevyError::Resource { op, msg: msg.into() }
    }

    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, LevyError::Numerical { .. })
    }
}

pub type Result<T> = std::result::Result<T, LevyError>;
