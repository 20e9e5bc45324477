//! Scalar abstraction for the measurement pipeline.
//!
//! All geometry and metric code is generic over [`Real`] so volumes can be
//! carried as `f32` or `f64`. The crate root exports `f64` aliases, which is
//! what the drift pipeline uses.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Floating-point scalar used for voxel values and millimetre measurements.
pub trait Real: Float + Sum + Debug + Display + Send + Sync + 'static {}

impl<T> Real for T where T: Float + Sum + Debug + Display + Send + Sync + 'static {}

/// Lossy conversion from `f64` literals into the working scalar.
///
/// Panics only if `T` cannot represent ordinary finite constants, which no
/// `Real` type in practice fails to do.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from(x).expect("finite constant representable in scalar type")
}

/// Strictly positive and comparable; NaN fails.
#[inline]
pub fn is_positive<T: Real>(v: T) -> bool {
    v > T::zero()
}
