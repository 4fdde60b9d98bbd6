//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Coincident or otherwise unusable spatial locations.
    #[error("degenerate locations: {0}")]
    DegenerateLocations(String),

    /// Data whose variability is too low to fit anything (e.g. all zeros).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Invalid argument or configuration value.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Dimension or shape mismatch between inputs.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Numerical failure; carries the map component index when one applies.
    #[error("numeric failure{}: {msg}", component.map(|i| format!(" in component {i}")).unwrap_or_default())]
    Numeric { component: Option<usize>, msg: String },

    /// Optimizer produced a non-finite objective; carries the last iterate.
    #[error("optimizer diverged after {iterations} iterations at theta = {last_theta:?}")]
    OptimizerDiverged { iterations: usize, last_theta: Vec<f64> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed CSV input.
    #[error("csv error: {0}")]
    Csv(String),

    /// Malformed or incompatible model file.
    #[error("model file error: {0}")]
    ModelFile(String),
}

impl Error {
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric { component: None, msg: msg.into() }
    }

    pub fn numeric_in(component: usize, msg: impl Into<String>) -> Self {
        Error::Numeric { component: Some(component), msg: msg.into() }
    }
}
