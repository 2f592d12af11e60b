use thiserror::Error;

/// Errors raised by the decomposition, layer and training routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("topology mismatch: {0}")]
    Topology(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(
        "storage budget unattainable: needs at most {max_params} parameters, \
         smallest achievable is {min_params} (ratio {min_ratio:.4})"
    )]
    Budget {
        max_params: f64,
        min_params: usize,
        min_ratio: f64,
    },

    #[error("exhaustive summation of {terms} terms exceeds the budget of {limit}")]
    Size { terms: u128, limit: u128 },

    #[error("training diverged at step {step}: loss is {loss}")]
    Training { step: usize, loss: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
