use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar accepted by every routine in this crate.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static {}
