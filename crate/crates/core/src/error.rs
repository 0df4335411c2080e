use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed hypergraph: bad vertex index, bad order, loop where none is allowed.
    #[error("structural error: {0}")]
    Structural(String),

    /// A parameter is out of its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A rate function returned something unusable.
    #[error("model error: {0}")]
    Model(String),

    /// Inputs that are individually valid but inconsistent with each other.
    #[error("input error: {0}")]
    Input(String),

    /// The request exceeds a hard size guard.
    #[error("capacity error: {what} = {value} exceeds the limit {limit}")]
    Capacity {
        what: String,
        value: u128,
        limit: u128,
    },

    /// The ODE integrator could not make progress.
    #[error("integration failure at t = {t}: step size {step} fell below the minimum {min_step}")]
    Integration { t: f64, step: f64, min_step: f64 },

    /// The operation is not defined for this model or network.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Text input could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("fit error: {0}")]
    Fit(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
