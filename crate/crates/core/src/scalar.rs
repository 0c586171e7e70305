//! Scalar abstraction shared by the numeric core.
//!
//! Everything that does arithmetic on policy weights, sampled parameters or
//! rewards is generic over [`Scalar`]. `f64` is the working precision used by
//! the trainer and the CLI; `f32` is supported for the same code paths.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or computed constant.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).unwrap_or_else(Self::nan)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {}

impl Scalar for f32 {}
