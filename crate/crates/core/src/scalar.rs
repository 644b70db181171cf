//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the solvers are generic over (`f32` or `f64`).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Conversion from an `f64` literal (tolerances, formula constants).
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 literal")
    }

    /// Lossy view as `f64`, for reporting and error messages.
    fn lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn half(self) -> Self {
        self / Self::of(2.0)
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_convert_for_both_lanes() {
        assert_eq!(<f64 as Real>::of(0.5), 0.5);
        assert_eq!(<f32 as Real>::of(0.5), 0.5f32);
        assert_eq!(1.0f32.half(), 0.5f32);
    }
}
