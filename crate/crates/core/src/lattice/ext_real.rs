use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A real number or one of `+∞`, `−∞`; never NaN.
///
/// Arithmetic follows the lattice conventions `∞ − ∞ = 0`, `c + ∞ = ∞`
/// and `0·∞ = 0`, so sums and products are total.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct ExtReal<S>(S);

impl<S: Scalar> ExtReal<S> {
    pub fn new(x: S) -> Result<Self> {
        if x.is_nan() {
            Err(Error::InvalidValue("NaN is not an extended real".into()))
        } else {
            Ok(Self(x))
        }
    }

    /// Wraps a value known not to be NaN.
    #[inline]
    pub fn of(x: S) -> Self {
        debug_assert!(!x.is_nan(), "NaN passed to ExtReal::of");
        Self(x)
    }

    #[inline]
    pub fn pos_inf() -> Self {
        Self(S::infinity())
    }

    #[inline]
    pub fn neg_inf() -> Self {
        Self(S::neg_infinity())
    }

    #[inline]
    pub fn zero() -> Self {
        Self(S::zero())
    }

    #[inline]
    pub fn get(self) -> S {
        self.0
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    #[inline]
    pub fn is_pos_inf(self) -> bool {
        self.0 == S::infinity()
    }

    #[inline]
    pub fn is_neg_inf(self) -> bool {
        self.0 == S::neg_infinity()
    }

    /// Negative part `max(−x, 0)`.
    #[inline]
    pub fn neg_part(self) -> Self {
        if self.0 < S::zero() {
            Self(-self.0)
        } else {
            Self::zero()
        }
    }

    /// Positive part `max(x, 0)`.
    #[inline]
    pub fn pos_part(self) -> Self {
        if self.0 > S::zero() {
            self
        } else {
            Self::zero()
        }
    }

    #[inline]
    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    #[inline]
    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Absolute-or-symbolic closeness: equal infinities match, finite
    /// values match within `tol·max(1, |a|, |b|)`.
    pub fn approx_eq(self, other: Self, tol: S) -> bool {
        if !self.is_finite() || !other.is_finite() {
            return self == other;
        }
        let scale = S::one().max(self.0.abs()).max(other.0.abs());
        (self.0 - other.0).abs() <= tol * scale
    }

    /// Absolute closeness; infinities compared symbolically.
    pub fn abs_eq(self, other: Self, tol: S) -> bool {
        if !self.is_finite() || !other.is_finite() {
            return self == other;
        }
        (self.0 - other.0).abs() <= tol
    }
}

impl<S: Scalar> From<S> for ExtReal<S> {
    /// Panics on NaN in debug builds.
    fn from(x: S) -> Self {
        Self::of(x)
    }
}

impl<S: Scalar> Add for ExtReal<S> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let (a, b) = (self.0, rhs.0);
        if a.is_infinite() && b.is_infinite() && a.signum() != b.signum() {
            Self(S::zero())
        } else {
            Self(a + b)
        }
    }
}

impl<S: Scalar> Sub for ExtReal<S> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<S: Scalar> Neg for ExtReal<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl<S: Scalar> Mul for ExtReal<S> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        if self.0 == S::zero() || rhs.0 == S::zero() {
            Self(S::zero())
        } else {
            Self(self.0 * rhs.0)
        }
    }
}

impl<S: Scalar> Add<S> for ExtReal<S> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: S) -> Self {
        self + Self::of(rhs)
    }
}

impl<S: Scalar> Sub<S> for ExtReal<S> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: S) -> Self {
        self - Self::of(rhs)
    }
}

impl<S: Scalar> Mul<S> for ExtReal<S> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: S) -> Self {
        self * Self::of(rhs)
    }
}

impl<S: Scalar> Eq for ExtReal<S> {}

impl<S: Scalar> PartialOrd for ExtReal<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: Scalar> Ord for ExtReal<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.partial_cmp(&other.0).expect("ExtReal holds no NaN")
    }
}

impl<S: fmt::Debug> fmt::Debug for ExtReal<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.0, f)
    }
}

impl<S: Scalar> fmt::Display for ExtReal<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pos_inf() {
            f.write_str("inf")
        } else if self.is_neg_inf() {
            f.write_str("-inf")
        } else {
            fmt::Display::fmt(&self.0, f)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type E = ExtReal<f64>;

    #[test]
    fn infinity_minus_infinity_is_zero() {
        assert_eq!(E::pos_inf() + E::neg_inf(), E::zero());
        assert_eq!(E::neg_inf() + E::pos_inf(), E::zero());
        assert_eq!(E::pos_inf() - E::pos_inf(), E::zero());
    }

    #[test]
    fn finite_plus_infinity_absorbs() {
        assert_eq!(E::of(3.0) + E::pos_inf(), E::pos_inf());
        assert_eq!(E::of(-1e300) + E::pos_inf(), E::pos_inf());
        assert_eq!(E::of(2.0) - E::pos_inf(), E::neg_inf());
    }

    #[test]
    fn zero_times_infinity_is_zero() {
        assert_eq!(E::zero() * E::pos_inf(), E::zero());
        assert_eq!(E::neg_inf() * E::zero(), E::zero());
        assert_eq!(E::of(2.0) * E::pos_inf(), E::pos_inf());
        assert_eq!(E::of(-2.0) * E::pos_inf(), E::neg_inf());
    }

    #[test]
    fn nan_is_rejected() {
        assert!(E::new(f64::NAN).is_err());
    }

    #[test]
    fn parts_and_order() {
        assert_eq!(E::of(-2.5).neg_part(), E::of(2.5));
        assert_eq!(E::pos_inf().neg_part(), E::zero());
        assert_eq!(E::pos_inf().pos_part(), E::pos_inf());
        assert!(E::neg_inf() < E::of(-1e308));
        assert_eq!(E::of(1.0).max(E::pos_inf()), E::pos_inf());
    }
}
