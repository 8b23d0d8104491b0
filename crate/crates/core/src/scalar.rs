use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the numerical core is written against (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Smallest value taken before a logarithm of an intensity or probability.
pub fn log_floor<T: Scalar>() -> T {
    // 1e-300 underflows in f32; fall back to the smallest positive normal there.
    let floor = T::of(1e-300);
    if floor > T::zero() {
        floor
    } else {
        T::min_positive_value()
    }
}

/// `ln(max(x, floor))`.
#[inline]
pub fn safe_ln<T: Scalar>(x: T) -> T {
    x.max(log_floor()).ln()
}
