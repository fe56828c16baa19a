//! Error type shared by the field, solver, noise, and dynamics layers.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Two fields were combined across different grid resolutions.
    #[error("grid mismatch: {0}x{0} vs {1}x{1}")]
    GridMismatch(usize, usize),

    /// A field value became NaN or infinite.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// A parameter failed validation.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The vorticity handed to the stream solver carries a weighted mean
    /// beyond the compatibility tolerance, so no stream function exists.
    #[error("incompatible vorticity: weighted mean {mean:e} exceeds tolerance {tolerance:e}")]
    IncompatibleVorticity { mean: f64, tolerance: f64 },

    /// Conjugate gradients failed to reach the requested residual.
    #[error("stream solve stalled: relative residual {residual:e} after {iterations} iterations")]
    SolverDiverged { iterations: usize, residual: f64 },

    /// The advective CFL bound rejected the step size.
    #[error("CFL violation: dt {dt:e} exceeds limit {limit:e} at speed {speed:e}")]
    CflViolation { dt: f64, limit: f64, speed: f64 },

    /// A Brownian increment was requested outside the tabulated horizon or
    /// off the fine step grid.
    #[error("Brownian path: {0}")]
    BrownianPath(String),

    /// A binary table or snapshot failed to parse.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
