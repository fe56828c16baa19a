//! Positive depth profiles: the weight `b` of every inner product, its
//! cached spectral gradient, and the aspect parameter `delta` entering the
//! wave operator.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::scalar::Scalar;
use crate::spectral;

/// Depth floor used by the built-in profiles unless overridden.
pub const DEFAULT_DEPTH_FLOOR: f64 = 1e-6;

/// Built-in analytic depth families, sampled onto the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthProfile {
    /// `b = depth`.
    Constant { depth: f64 },
    /// `b = base + amplitude * sin(2 pi x1)`.
    SingleHarmonic { base: f64, amplitude: f64 },
    /// `b = base + amplitude1 * sin(2 pi x1) + amplitude2 * cos(2 pi x2)`.
    DoubleHarmonic {
        base: f64,
        amplitude1: f64,
        amplitude2: f64,
    },
}

impl DepthProfile {
    pub fn sample<T: Scalar>(&self, grid: GridSpec) -> Result<ScalarField<T>> {
        use std::f64::consts::TAU;
        match *self {
            DepthProfile::Constant { depth } => ScalarField::from_fn(grid, |_, _| depth),
            DepthProfile::SingleHarmonic { base, amplitude } => {
                ScalarField::from_fn(grid, |x1, _| base + amplitude * (TAU * x1).sin())
            }
            DepthProfile::DoubleHarmonic {
                base,
                amplitude1,
                amplitude2,
            } => ScalarField::from_fn(grid, |x1, x2| {
                base + amplitude1 * (TAU * x1).sin() + amplitude2 * (TAU * x2).cos()
            }),
        }
    }

    /// Samples the profile and wraps it with cached differential data.
    pub fn build<T: Scalar>(&self, grid: GridSpec, delta: f64) -> Result<Bathymetry<T>> {
        Bathymetry::new(self.sample(grid)?, delta, DEFAULT_DEPTH_FLOOR)
    }
}

/// Validated positive depth field with cached `1/b`, spectral gradient,
/// grid bounds, and the aspect ratio `delta >= 0`.
#[derive(Debug, Clone)]
pub struct Bathymetry<T: Scalar> {
    b: ScalarField<T>,
    inv_b: ScalarField<T>,
    grad_b: VectorField<T>,
    b_min: f64,
    b_max: f64,
    delta: f64,
    constant: bool,
}

impl<T: Scalar> Bathymetry<T> {
    /// Validates `b >= depth_floor > 0` pointwise and caches `1/b` and the
    /// spectral gradient. A constant profile (detected exactly from the
    /// samples) stores an identically zero gradient so the analytic value
    /// is reproduced without rounding residue.
    pub fn new(b: ScalarField<T>, delta: f64, depth_floor: f64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("aspect ratio must be finite and >= 0, got {delta}"),
            });
        }
        if !(depth_floor > 0.0) {
            return Err(Error::InvalidParameter {
                name: "depth_floor",
                reason: format!("depth floor must be positive, got {depth_floor}"),
            });
        }
        let mut b_min = f64::INFINITY;
        let mut b_max = f64::NEG_INFINITY;
        for v in b.values().iter() {
            let v = v.as_f64();
            b_min = b_min.min(v);
            b_max = b_max.max(v);
        }
        if b_min < depth_floor {
            return Err(Error::InvalidParameter {
                name: "bathymetry",
                reason: format!("minimum depth {b_min} is below the floor {depth_floor}"),
            });
        }
        let constant = b_min == b_max;
        let inv_b = b.map(|v| T::one() / v);
        let grad_b = if constant {
            VectorField::zeros(b.grid())
        } else {
            spectral::gradient(&b)
        };
        Ok(Self {
            b,
            inv_b,
            grad_b,
            b_min,
            b_max,
            delta,
            constant,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.b.grid()
    }

    pub fn b(&self) -> &ScalarField<T> {
        &self.b
    }

    pub fn inv_b(&self) -> &ScalarField<T> {
        &self.inv_b
    }

    pub fn grad_b(&self) -> &VectorField<T> {
        &self.grad_b
    }

    pub fn b_min(&self) -> f64 {
        self.b_min
    }

    pub fn b_max(&self) -> f64 {
        self.b_max
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Whether the sampled depth is exactly uniform; enables the
    /// constant-coefficient fast paths.
    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// Grid mean of `b`, the coefficient of the spectral preconditioner.
    pub fn mean_depth(&self) -> T {
        self.b.mean()
    }
}
