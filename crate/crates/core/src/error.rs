use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed call: wrong lengths, out-of-range parameters, bad dimensions.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Well-formed call outside the domain where the operation is defined,
    /// e.g. an action that is not in the action space.
    #[error("outside domain: {0}")]
    Domain(String),

    #[error(
        "simplex solver did not converge after {iterations} iterations \
         (last step {last_step:e}, squared residual {residual:e})"
    )]
    NonConvergence {
        iterations: usize,
        last_step: f64,
        residual: f64,
    },

    #[error(transparent)]
    Validation(#[from] ValidationError),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("lag sweep row ({variant}, dwell {dwell}): {source}")]
    SweepRow {
        variant: String,
        dwell: usize,
        source: Box<Error>,
    },
}

impl Error {
    /// The underlying error, looking through per-row wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::SweepRow { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

/// A single problem found while validating a document, keyed by field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

/// Every violation found in a document, not just the first.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize, Error)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl ValidationError {
    pub fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> std::result::Result<(), ValidationError> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(self)
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation error(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "; {}: {}", v.field, v.message)?;
        }
        Ok(())
    }
}
