use thiserror::Error;

use crate::field::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: Shape, found: Shape },

    #[error("length mismatch: expected {expected} entries, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A smooth term was evaluated outside of its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Step parameters violate the metric positivity condition.
    #[error(
        "infeasible step parameters: tau*L/kappa + tau*sigma*|K|^2 = {tau_l_kappa} + {tau_sigma_k2} > 1 \
         (tau = {tau}, L = {lipschitz}, kappa = {kappa}, |K| <= {k_norm})"
    )]
    InfeasibleStep {
        tau: f64,
        lipschitz: f64,
        kappa: f64,
        k_norm: f64,
        tau_l_kappa: f64,
        tau_sigma_k2: f64,
    },

    #[error("{0}")]
    Unsupported(String),

    #[error("iterative solver did not converge: {0}")]
    Convergence(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
