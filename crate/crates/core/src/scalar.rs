//! Scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the loss and metric kernels are generic over.
///
/// Implemented by `f32` and `f64`; gradient checks instantiate `f64`.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + 'static {
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize conversion")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + 'static
{
}
