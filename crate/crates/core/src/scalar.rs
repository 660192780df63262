//! Scalar abstraction shared by the numeric modules.
//!
//! Feature tensors, coordinates, head targets and the reference executor are
//! generic over [`Real`]; genome metadata, cost accounting and search
//! bookkeeping stay in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point element type: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts from `f64`, rounding to the nearest representable value.
    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Converts a coordinate triple to `f64`.
#[inline]
pub fn to_f64_3<T: Real>(p: &[T; 3]) -> [f64; 3] {
    [p[0].as_f64(), p[1].as_f64(), p[2].as_f64()]
}

/// Converts an `f64` coordinate triple to `T`.
#[inline]
pub fn from_f64_3<T: Real>(p: [f64; 3]) -> [T; 3] {
    [T::of(p[0]), T::of(p[1]), T::of(p[2])]
}
