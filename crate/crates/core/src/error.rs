use thiserror::Error;

use crate::gaussian::Mode;

/// Errors produced by the simulation core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("operating-point solver did not converge from any seed")]
    NoConvergence,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("eigenvalue solver did not converge")]
    EigenFailure,

    #[error("drift matrix is not stable (max real eigenvalue part {max_real:e})")]
    UnstableSystem { max_real: f64 },

    #[error("linear system is numerically singular (pivot ratio {pivot_ratio:e})")]
    SingularSystem { pivot_ratio: f64 },

    #[error("mode {0:?} is not present in the covariance matrix")]
    UnknownMode(Mode),

    #[error("negative discriminant {0:e} in the two-mode symplectic spectrum")]
    NegativeDiscriminant(f64),

    #[error("phase grid is ill-posed: design matrix rank {rank} < 10")]
    IllPosedGrid { rank: usize },

    #[error("integration step violates the explicit-scheme guard: dt*rho(K) = {0:.3} >= 0.1")]
    UnstableScheme(f64),

    #[error("malformed sample data: {0}")]
    SampleFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;
