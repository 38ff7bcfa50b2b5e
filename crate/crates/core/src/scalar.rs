//! Scalar abstraction shared by the numerical core.
//!
//! Everything that does arithmetic is generic over [`Scalar`]. Training runs in
//! `f32`; gradient checks run the identical code paths in `f64`.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point element type: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal, panicking only if the target cannot represent it at all.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("scalar literal out of range")
    }

    #[inline]
    fn from_f32_lossless(v: f32) -> Self {
        <Self as FromPrimitive>::from_f32(v).expect("f32 not representable")
    }

    #[inline]
    fn to_f32_lossy(self) -> f32 {
        ToPrimitive::to_f32(&self).unwrap_or(f32::NAN)
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn from_usize_exact(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize not representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts a slice between scalar types (through `f64`).
pub fn cast_slice<A: Scalar, B: Scalar>(src: &[A]) -> Vec<B> {
    src.iter().map(|&v| B::lit(v.to_f64_lossy())).collect()
}
