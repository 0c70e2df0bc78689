use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {what} = {value:e}")]
    Domain { what: &'static str, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("trajectory reached the sonic line at x = {x:.6} (rho = {rho:.12}, sonic density {sonic:.12})")]
    Singularity { x: f64, rho: f64, sonic: f64 },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("compatibility error: {0}")]
    Compatibility(String),

    #[error("ellipticity lost at axial index {index}: {detail}")]
    Ellipticity { index: usize, detail: String },

    #[error("Krylov solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("Krylov breakdown at iteration {iteration} ({detail}); the banded direct solver is the fallback")]
    Breakdown { iteration: usize, detail: String },

    #[error("state cannot be reconstructed at node ({i}, {j}, {k}): B + phi - h = {value:e}")]
    Reconstruction { i: usize, j: usize, k: usize, value: f64 },

    #[error("fixed-point iteration diverged after {iterations} iterations: {reason}")]
    Diverged {
        iterations: usize,
        reason: String,
        report: Box<crate::fixpoint::ConvergenceReport>,
    },

    #[error("fixed-point iteration did not converge in {iterations} iterations (last difference {last:e})")]
    FixedPointNonConvergence {
        iterations: usize,
        last: f64,
        report: Box<crate::fixpoint::ConvergenceReport>,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
