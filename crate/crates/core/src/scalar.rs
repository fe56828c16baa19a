//! Scalar abstraction so the whole pipeline can run at either precision.

use num_traits::{Float, FloatConst, NumAssign, NumCast, ToPrimitive};

/// Floating-point scalar usable for grid fields and spectral transforms.
///
/// Implemented for `f32` and `f64`. Everything downstream of the transforms
/// (norms, the stream solver, time stepping) is written against this trait;
/// the shipped binary and all file formats instantiate `f64`.
pub trait Scalar:
    rustfft::FftNum + Float + FloatConst + NumAssign + std::iter::Sum<Self> + std::fmt::Display
{
    /// Conversion from `f64`, for constants and configuration values.
    fn of_f64(value: f64) -> Self {
        <Self as NumCast>::from(value).expect("finite f64 converts to any float scalar")
    }

    /// Widening (or identity) conversion to `f64`, for reports and output.
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("float scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
