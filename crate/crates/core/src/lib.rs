//! Pseudo-spectral building blocks for shallow-basin vorticity dynamics
//! with transport noise on the unit torus: periodic fields and FFT
//! calculus, depth-weighted norms and operators, the stream-function
//! elliptic solver with dense oracles, a reproducible noise basis with
//! persisted Brownian increments, and the stochastic time integrators.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! Brownian increment tables and the dense verification oracles are
//! fixed to `f64`, the precision the acceptance tolerances assume.

// Validation guards are written `!(x >= 0.0)` on purpose: the negated
// form rejects NaN, which `x < 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bathymetry;
pub mod calculus;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod noise;
pub mod oracle;
pub mod sample;
pub mod scalar;
pub mod solver;
pub mod spectral;

pub use bathymetry::{Bathymetry, DepthProfile};
pub use calculus::SobolevIndex;
pub use dynamics::{
    CascadeConfig, CutoffNorm, DiagnosticsRow, LevelRun, Model, RunConfig, RunRecord, Scheme,
    SimState, StoppingMonitor, TruncationConfig,
};
pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarField, SpectrumField, VectorField};
pub use noise::{BasisReport, BrownianPath, NoiseBasis};
pub use scalar::Scalar;
pub use solver::{EllipticOperator, SolverReport};

/// Double-precision aliases (the default working precision).
pub type ScalarField64 = grid::ScalarField<f64>;
pub type VectorField64 = grid::VectorField<f64>;
pub type Bathymetry64 = bathymetry::Bathymetry<f64>;

/// Single-precision aliases for memory-constrained exploratory runs.
pub type ScalarField32 = grid::ScalarField<f32>;
pub type VectorField32 = grid::VectorField<f32>;
pub type Bathymetry32 = bathymetry::Bathymetry<f32>;
