//! Numeric abstraction shared by the metric, annotation and network code.
//!
//! Everything that does arithmetic on scores, levels or weights is written
//! against [`Scalar`] so the same routines run in `f64` (training, gradient
//! checks, metric oracles) and `f32` (deployed inference).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::LinalgScalar;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant. All supported scalars can represent
    /// (a rounding of) every finite `f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits in a float")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
