//! Scalar abstraction for the numeric routines.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the math modules are generic over: f32 or f64.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from a nanosecond count; exact up to 2^53 for f64.
    fn from_ns(ns: u64) -> Self {
        Self::from_u64(ns).expect("nanosecond count representable")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
