//! Scalar abstraction that lets the pipeline run in `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};

/// Floating-point scalar used throughout the crate.
///
/// `from_f64` may narrow; all constants in this crate fit comfortably in
/// `f32` range, so narrowing only costs precision, never validity.
pub trait Real:
    Float + NumAssign + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn half() -> Self {
        Self::one() / Self::two()
    }
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Absolute-plus-relative tolerance used when comparing derived schedule
/// times: `1e-6 * (1 + |expected|)`.
pub fn schedule_tol<R: Real>(expected: R) -> R {
    R::from_f64(1e-6) * (R::one() + expected.abs())
}

/// `a` equals `b` within [`schedule_tol`] of `b`.
pub fn close<R: Real>(a: R, b: R) -> bool {
    (a - b).abs() <= schedule_tol(b)
}
