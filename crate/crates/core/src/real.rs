//! Scalar abstraction for the numeric core.
//!
//! Everything numeric (tensors, tape, networks, metrics) is generic over
//! [`Real`], instantiated as `f64` for training and gradient checks and
//! optionally as `f32` for sampling inner loops.

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating-point scalar usable throughout the crate.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Debug + Display + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Lossy conversion from `f64` into the working scalar.
#[inline]
pub fn from_f64<S: Real>(x: f64) -> S {
    S::from_f64(x).expect("f64 must convert into the working scalar")
}

/// Widening conversion back to `f64` (diagnostics, serialization).
#[inline]
pub fn to_f64<S: Real>(x: S) -> f64 {
    x.to_f64().expect("scalar must widen to f64")
}
