use thiserror::Error;

/// Errors raised by the model, optimizers, simulator and harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Parameters outside the region where a formula is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// An index argument outside its admissible range.
    #[error("{name}={value} out of range [0, {max}]")]
    Range {
        name: &'static str,
        value: usize,
        max: usize,
    },

    #[error("custodian overloaded: load {load} >= capacity {capacity}")]
    Overload { load: f64, capacity: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("budget {budget} infeasible for {contents} contents")]
    InfeasibleBudget { budget: f64, contents: usize },

    #[error("quadratic coefficient {value} at index {index} is not positive")]
    NonConvex { index: usize, value: f64 },

    #[error("no grid cell satisfies the budget within {tolerance}")]
    NoFeasiblePoint { tolerance: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient samples: {observed} < {required}")]
    InsufficientSamples { observed: usize, required: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
