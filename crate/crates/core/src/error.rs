use thiserror::Error;

use crate::trainers::FitDiagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value at observation {index}: {what}")]
    NonFinite { index: usize, what: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("optimizer did not converge after {} iterations (gradient norm {:.3e})", .0.iterations, .0.grad_norm)]
    NonConvergence(Box<FitDiagnostics>),

    #[error("all observations are censored; the scale parameter is not identifiable")]
    AllCensored,

    #[error("labels contain a single class")]
    SingleClass,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
