//! Command-line harness around the `lakesim-core` simulator: run
//! configuration, diagnostics and snapshot file formats, the invariant
//! suite, and the numerical experiments (viscous-cascade convergence,
//! initial-condition continuity, integrator-gap order).

pub mod app;
pub mod config;
pub mod experiments;
pub mod io;
pub mod report;
