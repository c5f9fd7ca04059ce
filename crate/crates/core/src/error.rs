//! Error types shared across the solver.

use thiserror::Error;

/// Errors from grid construction and grid-level operations.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid size {0} is not an even power of two")]
    BadSize(usize),
    #[error("grid extent {0} must be positive")]
    BadExtent(f64),
    #[error("field shape mismatch: {expected} nodes expected, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Errors from the forward (Lippmann-Schwinger) solver and data computation.
#[derive(Debug, Error)]
pub enum ForwardError {
    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations (k = {k_re}+{k_im}i)")]
    NoConvergence {
        residual: f64,
        iterations: usize,
        k_re: f64,
        k_im: f64,
    },
    #[error("grid too small: solution density at the box edge is {edge:.3e} of its maximum (limit {limit:.1e})")]
    GridTooSmall { edge: f64, limit: f64 },
    #[error("exceptional point on the disk boundary at node {node} (sigma_min {sigma_min:.3e}); increase the disk radius")]
    ExceptionalOnBoundary { node: usize, sigma_min: f64 },
    #[error("closed contour too small: it must enclose the numerical support of the potential")]
    ContourTooSmall,
}

/// Errors from scattering-data handling and time evolution.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("time evolution overflow risk: exponent real part {0:.1} exceeds 700")]
    OverflowRisk(f64),
    #[error("scattering data has no boundary block but the disk is non-empty")]
    MissingBoundaryBlock,
    #[error("boundary block was built for {expected} nodes, got {got}")]
    BoundaryMismatch { expected: usize, got: usize },
}

/// Errors from the inverse transform.
#[derive(Debug, Error)]
pub enum InverseError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("linear solve near-singular: sigma_min estimate {sigma_min:.3e}, residual {residual:.3e}")]
    NearSingular { sigma_min: f64, residual: f64 },
    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
}

/// Errors from the split-step integrator.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("blow-up detected at t = {t:.6}: max|q| = {maxq:.3e} exceeds cap {cap:.3e}")]
    BlowupDetected { t: f64, maxq: f64, cap: f64 },
}
