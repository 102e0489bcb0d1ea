use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The evaluation point is a pole of the function.
    #[error("pole: {0}")]
    Pole(String),

    /// A documented precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The requested truncation accuracy cannot be reached within the hard caps.
    #[error("truncation infeasible: requested {requested:e}, best achievable {achievable:e}")]
    TruncationInfeasible { requested: f64, achievable: f64 },

    /// A quadrature failed to converge; carries the best estimate available.
    #[error("accuracy not reached: estimate {estimate:e} with error {error:e}")]
    Accuracy { estimate: f64, error: f64 },

    /// The configured prime budget is smaller than the cutoff required.
    #[error("prime budget exceeded: cutoff {required} needed, budget {budget}")]
    Budget { required: u64, budget: u64 },

    /// The input is valid mathematically but the operation does not support it.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
