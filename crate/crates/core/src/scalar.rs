//! Scalar abstraction for scores, weights and statistics.
//!
//! Ranking and evaluation arithmetic is written once against [`Scalar`] and
//! instantiated for `f64` (the default everywhere) and `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal or configuration value into `Self`.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 representable in every Scalar")
    }

    #[inline]
    fn from_count(value: usize) -> Self {
        Self::from_usize(value).expect("count representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Total order used for ranking: NaN sorts below every number.
    fn total_cmp_scores(&self, other: &Self) -> std::cmp::Ordering {
        match (self.is_nan(), other.is_nan()) {
            (true, true) => std::cmp::Ordering::Equal,
            (true, false) => std::cmp::Ordering::Less,
            (false, true) => std::cmp::Ordering::Greater,
            (false, false) => self.partial_cmp(other).expect("non-NaN"),
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_sorts_low() {
        assert_eq!(f64::NAN.total_cmp_scores(&0.0), std::cmp::Ordering::Less);
        assert_eq!(1.0f32.total_cmp_scores(&0.5), std::cmp::Ordering::Greater);
        assert_eq!(<f32 as Scalar>::lit(0.25), 0.25f32);
    }
}
