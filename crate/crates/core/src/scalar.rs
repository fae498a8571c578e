//! Scalar abstraction shared by every estimand and every probability in the crate.
//!
//! All math is written against [`Scalar`], so the same code runs on `f32`,
//! `f64`, and exact arbitrary-precision rationals ([`BigRational`]). The exact
//! instantiation turns float tolerances into plain equality, which is what the
//! identification tests lean on when they want a zero gap rather than a small one.

use std::fmt::Debug;

use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Numeric type usable as a probability or a signed effect.
pub trait Scalar:
    Num + Signed + Clone + Debug + PartialOrd + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// `true` when arithmetic on the type is exact (no rounding).
    const EXACT: bool;

    /// Converts a decimal-entered `f64` into the scalar type.
    ///
    /// Rationals take the exact binary value of the float, so a round trip
    /// through `to_f64` is lossless.
    fn from_f64_exact(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 is representable")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_finite_value(&self) -> bool {
        true
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;
}

/// Converts a value between two scalar types by way of `f64`.
pub fn convert<S: Scalar, T: Scalar>(value: &S) -> T {
    T::from_f64_exact(value.to_f64_lossy())
}

/// Running Neumaier-compensated sum.
///
/// Exact scalar types skip the compensation term since it is identically zero.
#[derive(Debug, Clone)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Scalar> Default for CompensatedSum<T> {
    fn default() -> Self {
        Self {
            sum: T::zero(),
            carry: T::zero(),
        }
    }
}

impl<T: Scalar> CompensatedSum<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: T) {
        if T::EXACT {
            self.sum = std::mem::replace(&mut self.sum, T::zero()) + value;
            return;
        }
        let sum = std::mem::replace(&mut self.sum, T::zero());
        let t = sum.clone() + value.clone();
        let carry = std::mem::replace(&mut self.carry, T::zero());
        self.carry = if sum.abs() >= value.abs() {
            carry + ((sum - t.clone()) + value)
        } else {
            carry + ((value - t.clone()) + sum)
        };
        self.sum = t;
    }

    pub fn total(&self) -> T {
        self.sum.clone() + self.carry.clone()
    }
}

/// Sums in iteration order with Neumaier compensation.
pub fn compensated_sum<T, I>(values: I) -> T
where
    T: Scalar,
    I: IntoIterator<Item = T>,
{
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

/// `true` when `value` lies in the closed unit interval.
pub fn is_probability<T: Scalar>(value: &T) -> bool {
    value.is_finite_value() && *value >= T::zero() && *value <= T::one()
}

pub fn tolerance<T: Scalar>(value: f64) -> T {
    T::from_f64_exact(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    #[test]
    fn compensated_sum_recovers_cancelled_mass() {
        let values = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum::<f64, _>(values), 2.0);
        let naive: f64 = values.iter().sum();
        assert_eq!(naive, 0.0);
    }

    #[test]
    fn compensated_sum_of_tenths() {
        let s: f64 = compensated_sum(std::iter::repeat_n(0.1, 10));
        assert_eq!(s, 1.0);
    }

    #[test]
    fn rational_from_f64_is_exact() {
        let r = BigRational::from_f64_exact(0.1);
        assert_eq!(r.to_f64_lossy(), 0.1);
        assert_ne!(r, BigRational::new(BigInt::from(1), BigInt::from(10)));
    }

    #[test]
    fn probability_bounds() {
        assert!(is_probability(&0.0_f64));
        assert!(is_probability(&1.0_f64));
        assert!(!is_probability(&1.0000001_f64));
        assert!(!is_probability(&f64::NAN));
        assert!(!is_probability(&-0.5_f32));
    }
}
