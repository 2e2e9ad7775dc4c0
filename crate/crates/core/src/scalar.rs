//! Scalar abstraction for real-valued measurements.

use std::fmt::{Debug, Display};

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point: f32 or f64.
pub trait Real: Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static {
    /// Converts a count ratio `num / den`, returning zero when `den` is zero.
    fn ratio(num: usize, den: usize) -> Self {
        if den == 0 {
            return Self::zero();
        }
        Self::from_usize(num).unwrap() / Self::from_usize(den).unwrap()
    }

    /// Converts a ratio of exact path counts.
    fn big_ratio(num: &BigUint, den: &BigUint) -> Self {
        if *den == BigUint::default() {
            return Self::zero();
        }
        let q = BigRational::new(num.clone().into(), den.clone().into());
        Self::from_f64(q.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(Self::nan)
    }

    /// Exact rational value of this float. `None` for NaN and infinities.
    fn to_rational(self) -> Option<BigRational> {
        BigRational::from_float(self.to_f64()?)
    }
}

impl Real for f32 {}
impl Real for f64 {}
