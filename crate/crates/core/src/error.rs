use std::fmt;

use thiserror::Error;

/// A single structural violation found while validating an [`crate::Interaction`].
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    /// Series length below the minimum of 2 samples.
    TooShort { len: usize },
    /// A sample vector whose dimension differs from the layout.
    DimensionMismatch { step: usize, expected: usize, got: usize },
    /// NaN or infinity at (channel, step).
    NonFinite { channel: usize, step: usize },
    /// Timestep must be positive and finite.
    BadTimestep { timestep: f64 },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::TooShort { len } => {
                write!(f, "series too short: {len} samples (need at least 2)")
            }
            ValidationIssue::DimensionMismatch { step, expected, got } => {
                write!(f, "sample {step} has {got} entries, layout has {expected} channels")
            }
            ValidationIssue::NonFinite { channel, step } => {
                write!(f, "non-finite value at channel {channel}, step {step}")
            }
            ValidationIssue::BadTimestep { timestep } => {
                write!(f, "timestep must be positive and finite, got {timestep}")
            }
        }
    }
}

/// Every violation found in one validation pass, not just the first.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interaction:\n{0}")]
    Validation(ValidationReport),
    #[error("layout error: {0}")]
    Layout(String),
    #[error("basis error: {0}")]
    Basis(String),
    #[error("filter error: {0}")]
    Filter(String),
    #[error("feature selection error: {0}")]
    Selection(String),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
