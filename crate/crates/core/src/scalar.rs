//! Scalar abstraction for the numeric kernels.
//!
//! Everything numeric in this crate is generic over [`Scalar`], which is any
//! real field with primitive conversions. `f64` is the working type (the
//! crate root exports concrete aliases); `f32` is available when memory
//! outweighs precision.

use num_traits::{FromPrimitive, ToPrimitive};

pub trait Scalar:
    nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + std::iter::Sum
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub fn conv<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("finite constant")
}

#[inline]
pub(crate) fn fmax<S: Scalar>(a: S, b: S) -> S {
    if a > b {
        a
    } else {
        b
    }
}

#[inline]
pub(crate) fn fmin<S: Scalar>(a: S, b: S) -> S {
    if a < b {
        a
    } else {
        b
    }
}
