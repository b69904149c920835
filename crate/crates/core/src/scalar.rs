//! Floating-point abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type used by the language model, the gradient machinery and
/// the accountant. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
    /// Lossy conversion from `f64`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    /// Lossy conversion to `f64`.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + 'static
{
}

/// Sequential sum of squares followed by a square root.
///
/// Every L2 norm in the crate goes through this function so that clipping
/// and the checks performed on clipped output agree to the last bit.
pub fn l2_norm<T: Scalar>(values: &[T]) -> T {
    let mut acc = T::zero();
    for &v in values {
        acc += v * v;
    }
    acc.sqrt()
}
