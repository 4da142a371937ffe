//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type the toolkit is generic over (`f32` or `f64`).
///
/// Training and ensembling run natively in `S`; the clustering and
/// spectral criteria promote to `f64` internally regardless of `S`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`, rounding when narrowing.
    fn lit(value: f64) -> Self;

    /// Widens (or copies) `self` into an `f64`.
    fn as_f64(self) -> f64;

    /// Converts a storage value read from disk.
    fn of_f32(value: f32) -> Self;

    /// Narrows to the on-disk storage precision.
    fn as_f32(self) -> f32;
}

impl Scalar for f32 {
    #[inline]
    fn lit(value: f64) -> Self {
        value as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
    #[inline]
    fn of_f32(value: f32) -> Self {
        value
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(value: f64) -> Self {
        value
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn of_f32(value: f32) -> Self {
        f64::from(value)
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self as f32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_round_trip_is_exact_for_storage_values() {
        let x = 0.1_f32;
        assert_eq!(<f64 as Scalar>::of_f32(x).as_f32(), x);
        assert_eq!(<f32 as Scalar>::lit(0.5), 0.5_f32);
    }
}
