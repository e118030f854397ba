//! Scalar abstraction for the closed-form layer.
//!
//! All kernel evaluations, moment formulas and quadrature routines are
//! generic over [`Scalar`] so they can be instantiated at `f32` or `f64`.
//! Simulation and statistics run at [`crate::Real`] (`f64`): path generation
//! accumulates millions of terms and the verification tolerances assume
//! double precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the closed forms and quadrature.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// Shorthand for lossy conversion from `f64` constants.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }
    /// Lossy conversion towards `f64` (exact for `f32`/`f64`).
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
