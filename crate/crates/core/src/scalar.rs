//! Scalar abstraction shared by the exact and floating-point arithmetic paths.
//!
//! Three instantiations are provided: [`Rat`] (arbitrary-precision rationals),
//! [`crate::number_field::MQElement`] (multiquadratic field elements) and
//! `f64`. Exact scalars drive the lattice/number-theory layer, `f64` drives
//! the series evaluation layer.

use std::fmt::{Debug, Display};

pub use num_bigint::BigInt;
pub use num_rational::BigRational as Rat;

use num_traits::{One, Signed, ToPrimitive, Zero};

/// Field-like scalar for Cayley-Dickson coordinates.
///
/// Operations are methods taking references; all implementations are pure
/// and the values are immutable, so scalars are safe to share across threads.
pub trait Scalar: Clone + PartialEq + Debug + Display + Send + Sync + 'static {
    /// True when arithmetic is exact (no rounding).
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn from_rat(r: &Rat) -> Self;
    fn is_zero(&self) -> bool;

    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn neg(&self) -> Self;

    /// Exact division; `None` when `rhs` is zero (or not invertible).
    fn try_div(&self, rhs: &Self) -> Option<Self>;

    /// Floating approximation, used for reports and embeddings.
    fn approx_f64(&self) -> f64;
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_rat(r: &Rat) -> Self {
        rat_to_f64(r)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn neg(&self) -> Self {
        -self
    }
    fn try_div(&self, rhs: &Self) -> Option<Self> {
        if *rhs == 0.0 {
            None
        } else {
            Some(self / rhs)
        }
    }
    fn approx_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for Rat {
    const EXACT: bool = true;

    fn zero() -> Self {
        <Rat as Zero>::zero()
    }
    fn one() -> Self {
        <Rat as One>::one()
    }
    fn from_i64(v: i64) -> Self {
        Rat::from_integer(BigInt::from(v))
    }
    fn from_rat(r: &Rat) -> Self {
        r.clone()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn neg(&self) -> Self {
        -self
    }
    fn try_div(&self, rhs: &Self) -> Option<Self> {
        if Zero::is_zero(rhs) {
            None
        } else {
            Some(self / rhs)
        }
    }
    fn approx_f64(&self) -> f64 {
        rat_to_f64(self)
    }
}

/// Correctly rounded-ish f64 approximation of a rational.
pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Rational from a `p/q` or plain integer string.
pub fn rat_from_str(s: &str) -> Option<Rat> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().ok()?;
        let d: BigInt = den.trim().parse().ok()?;
        if Zero::is_zero(&d) {
            return None;
        }
        Some(Rat::new(n, d))
    } else {
        let n: BigInt = s.parse().ok()?;
        Some(Rat::from_integer(n))
    }
}

/// |r| as a rational.
pub fn rat_abs(r: &Rat) -> Rat {
    r.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_parsing_roundtrip() {
        let r = rat_from_str("3/2").unwrap();
        assert_eq!(r, Rat::new(BigInt::from(3), BigInt::from(2)));
        assert_eq!(format!("{r}"), "3/2");
        assert_eq!(format!("{}", rat_from_str("-4").unwrap()), "-4");
        assert!(rat_from_str("1/0").is_none());
    }

    #[test]
    fn division_by_zero_is_none() {
        assert!(Scalar::try_div(&1.0f64, &0.0).is_none());
        assert!(Rat::from_i64(1).try_div(&Rat::from_i64(0)).is_none());
        assert_eq!(
            Rat::from_i64(3).try_div(&Rat::from_i64(2)).unwrap(),
            rat_from_str("3/2").unwrap()
        );
    }
}
