//! Floating point abstraction shared by the analytic and simulation kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Real scalar the kernels are generic over: `f32` or `f64`.
///
/// Special functions (log-gamma, erfc) are evaluated in `f64` and narrowed,
/// so `f32` instantiations trade accuracy for footprint, not for speed.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_count(k: u64) -> Self {
        <Self as FromPrimitive>::from_u64(k).expect("count fits in scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
