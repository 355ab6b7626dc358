//! Scalar abstraction shared by all numeric code in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the maps, volumes and models are generic over.
///
/// Implemented for `f32` and `f64`. Gradient checks and the experiment
/// pipeline run in `f64`; `f32` is useful for inference and file I/O.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(x: usize) -> Self {
        Self::from_usize(x).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Smooth-L1 (Huber with slope 1) loss of a residual, transition at `beta`.
#[inline]
pub fn smooth_l1<T: Real>(residual: T, beta: T) -> T {
    let a = residual.abs();
    if a < beta {
        T::lit(0.5) * a * a / beta
    } else {
        a - T::lit(0.5) * beta
    }
}

/// Derivative of [`smooth_l1`] with respect to the residual.
#[inline]
pub fn smooth_l1_grad<T: Real>(residual: T, beta: T) -> T {
    if residual.abs() < beta {
        residual / beta
    } else {
        residual.signum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_l1_branches() {
        assert_eq!(smooth_l1(0.5f64, 1.0), 0.125);
        assert_eq!(smooth_l1(2.0f64, 1.0), 1.5);
        assert_eq!(smooth_l1(-1.0f64, 1.0), 0.5);
        assert_eq!(smooth_l1_grad(0.25f64, 1.0), 0.25);
        assert_eq!(smooth_l1_grad(-3.0f32, 1.0), -1.0);
    }
}
