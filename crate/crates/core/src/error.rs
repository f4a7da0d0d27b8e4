use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which axis of a data matrix an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Row,
    Column,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Row => f.write_str("row"),
            Axis::Column => f.write_str("column"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{axis} {index} has zero variance")]
    DegenerateAxis { axis: Axis, index: usize },

    #[error("double standardization did not converge after {iterations} iterations (max deviation {deviation:.3e})")]
    NonConvergence { iterations: usize, deviation: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("calibration failed: {0}")]
    CalibrationFailure(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerics rather than of the input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Numerical(_)
                | Error::CalibrationFailure(_)
                | Error::DegenerateAxis { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Non-fatal conditions attached to results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// The two leading eigenvalues are within relative `gap` of each other, so the
    /// first eigenvector is poorly determined.
    DegenerateEigengap { e1: f64, e2: f64, gap: f64 },
    /// Sampled row correlations have a mean far from zero; the corrected total
    /// correlation estimator assumes a zero mean.
    NonzeroRowCorrelationMean { mean: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::DegenerateEigengap { e1, e2, gap } => write!(
                f,
                "degenerate eigengap: e1 = {e1:.6e}, e2 = {e2:.6e} (relative gap {gap:.2e})"
            ),
            Warning::NonzeroRowCorrelationMean { mean } => {
                write!(f, "row correlations have mean {mean:.4}, corrected alpha assumes 0")
            }
        }
    }
}
