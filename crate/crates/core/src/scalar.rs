//! Scalar abstraction for the floating-point parts of the pipeline.
//!
//! Geometry, registration, ellipse statistics and metrics are written once
//! against [`Real`] and instantiated for `f32` and `f64`. Pixel accumulators
//! stay in exact integers and are converted at the boundary.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumCast};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 literal representable")
    }

    /// Lossy conversion from an exact integer accumulator.
    #[inline]
    fn from_int(v: i128) -> Self {
        <Self as NumCast>::from(v).expect("integer representable as float")
    }

    /// Registration errors below this are treated as numerically zero.
    fn zero_tolerance() -> Self {
        Self::epsilon().sqrt()
    }
}

impl Real for f32 {}
impl Real for f64 {}
