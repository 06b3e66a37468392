//! MSE prediction for implicitly defined estimators (IDEs).
//!
//! An IDE declares the maximizer of an objective function of the measurements
//! as the parameter estimate (ML, misspecified ML, MAP, quadratic-cost
//! estimators such as ESPRIT). This crate predicts the mean-square error of
//! such estimators by evaluating a pairwise-error-probability integral over
//! the error magnitude, and provides the classical reference bounds (CRLB,
//! MCRLB, HCRB, ZZB, BCRLB) plus a seeded Monte Carlo harness for
//! verification on direction-of-arrival scenarios.

pub mod bounds;
pub mod esprit;
pub mod models;
pub mod numeric;
pub mod predictor;
pub mod simulate;

use thiserror::Error;

/// Errors produced by any operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature did not converge within {n_evals} evaluations (best estimate {best_value:.6e}, error estimate {error_estimate:.3e})")]
    Convergence {
        best_value: f64,
        error_estimate: f64,
        n_evals: usize,
    },
    #[error("covariance matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("singular Fisher information: {0}")]
    SingularInformation(String),
    #[error("degenerate curvature: |C_D| = {c_d:.3e} too small relative to I_D = {i_d:.3e}")]
    DegenerateCurvature { c_d: f64, i_d: f64 },
    #[error("estimate undefined: {0}")]
    UndefinedEstimate(String),
    #[error("Monte Carlo aborted: {failed} of {total} runs failed")]
    TooManyFailures { failed: usize, total: usize },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
