//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A point was evaluated outside the support of a density.
    #[error("point outside support of `{density}`: coordinate {coord} = {value}")]
    OutsideSupport {
        density: String,
        coord: usize,
        value: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Covariance matrix failed the symmetric-positive-definite check.
    #[error("covariance matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    /// Normal equations stayed singular even after the ridge retry.
    #[error("singular normal equations ({context}); ridge retry did not help")]
    SingularSystem { context: String },

    #[error("objective is not finite at the start point")]
    NonFiniteObjective,

    #[error("adaptive quadrature did not converge within the subdivision budget on [{a}, {b}]")]
    QuadratureBudget { a: f64, b: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("fit failed for experiment `{experiment_id}`: {source}")]
    FitFailed {
        experiment_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// CLI exit-code contract: 1 for usage/config errors, 2 for runtime
    /// failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(Error::Config("bad".into()).exit_code(), 1);
        assert_eq!(Error::InvalidArgument("bad".into()).exit_code(), 1);
        assert_eq!(Error::NonFiniteObjective.exit_code(), 2);
        let fit = Error::FitFailed {
            experiment_id: "x".into(),
            source: Box::new(Error::NonFiniteObjective),
        };
        assert_eq!(fit.exit_code(), 2);
    }
}
