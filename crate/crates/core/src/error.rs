use thiserror::Error;

use crate::geometry::Point;

/// Errors raised by geometry, set, and integration routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs that do not fit together: mismatched backends, tangent vectors
    /// at the wrong base point, dimension mismatches, empty sets.
    #[error("structural error: {0}")]
    Structural(String),

    /// An operation was asked to act outside its validated region.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative method failed to reach its tolerance.
    #[error("numeric error: {message} (residual {residual:e})")]
    Numeric { message: String, residual: f64 },

    /// The projection solver ran out of iterations.
    #[error("projection did not converge after {iterations} iterations (KKT residual {residual:e})")]
    ProjectionNotConverged {
        best: Box<Point>,
        residual: f64,
        iterations: usize,
    },

    #[error("expression error at offset {offset}: {message}")]
    Expression { offset: usize, message: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A scenario invariant failed at load time.
    #[error("validation failed [{invariant}]: {detail}")]
    Validation { invariant: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>, residual: f64) -> Self {
        Error::Numeric {
            message: msg.into(),
            residual,
        }
    }

    pub(crate) fn validation(invariant: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Validation {
            invariant: invariant.into(),
            detail: detail.into(),
        }
    }

    /// Short machine-readable category used by the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Structural(_) => "structural",
            Error::Domain(_) => "domain",
            Error::Numeric { .. } => "numeric",
            Error::ProjectionNotConverged { .. } => "projection_not_converged",
            Error::Expression { .. } => "expression",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Io(_) => "io",
            Error::Serialization(_) => "serialization",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
