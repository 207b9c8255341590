use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::ExtReal;
use crate::scalar::Scalar;

/// Concave nondecreasing utility, finite on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UtilitySpec<S> {
    /// `U(x) = x`.
    Linear,
    /// `U(x) = 1 − e^{−λx}`.
    Exponential { lambda: S },
    /// `U(x) = ((1+x)^η − 1)/η` for `x >= 0` and `U(x) = x` below zero,
    /// `η ∈ (0, 1]`. Continuously differentiable at 0.
    Power { eta: S },
    /// Linear interpolation of `(x, U(x))` knots, extended with the first
    /// and last slopes.
    PiecewiseLinear { knots: Vec<(S, S)> },
}

impl<S: Scalar> UtilitySpec<S> {
    /// Structural validation plus a sampled concavity/monotonicity probe.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Linear => {}
            Self::Exponential { lambda } => {
                if !(lambda.is_finite() && *lambda > S::zero()) {
                    return Err(Error::InvalidUtility(format!("exponential rate {lambda} must be > 0")));
                }
            }
            Self::Power { eta } => {
                if !(*eta > S::zero() && *eta <= S::one()) {
                    return Err(Error::InvalidUtility(format!("power exponent {eta} not in (0, 1]")));
                }
            }
            Self::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return Err(Error::InvalidUtility("piecewise-linear utility needs two knots".into()));
                }
                if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                    return Err(Error::InvalidUtility("knots must be finite".into()));
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidUtility("knot abscissae must increase".into()));
                }
                let slopes = Self::slopes(knots);
                if slopes.iter().any(|s| *s < S::zero()) {
                    return Err(Error::InvalidUtility("utility must be nondecreasing".into()));
                }
                if slopes.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::InvalidUtility("utility must be concave (slopes nonincreasing)".into()));
                }
                if !(slopes[0] > S::zero()) {
                    return Err(Error::InvalidUtility(
                        "first slope must be positive (utility unbounded below)".into(),
                    ));
                }
            }
        }
        self.probe_shape()
    }

    fn probe_shape(&self) -> Result<()> {
        let tol = S::lit(1e-9);
        let h = S::lit(0.25);
        let mut x = S::lit(-20.0);
        while x <= S::lit(20.0) {
            let a = self.value_finite(x - h);
            let b = self.value_finite(x);
            let c = self.value_finite(x + h);
            let scale = S::one().max(a.abs()).max(c.abs());
            if c - b * S::two() + a > tol * scale {
                return Err(Error::InvalidUtility(format!("second difference positive near {x}")));
            }
            if c < b - tol * scale {
                return Err(Error::InvalidUtility(format!("utility decreasing near {x}")));
            }
            x = x + h;
        }
        Ok(())
    }

    fn slopes(knots: &[(S, S)]) -> Vec<S> {
        knots.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect()
    }

    /// `U(x)` for finite `x`.
    pub fn value_finite(&self, x: S) -> S {
        match self {
            Self::Linear => x,
            Self::Exponential { lambda } => -(-*lambda * x).exp_m1(),
            Self::Power { eta } => {
                if x >= S::zero() {
                    ((S::one() + x).powf(*eta) - S::one()) / *eta
                } else {
                    x
                }
            }
            Self::PiecewiseLinear { knots } => {
                let slopes = Self::slopes(knots);
                if x <= knots[0].0 {
                    return knots[0].1 + slopes[0] * (x - knots[0].0);
                }
                for (k, w) in knots.windows(2).enumerate() {
                    if x <= w[1].0 {
                        return w[0].1 + slopes[k] * (x - w[0].0);
                    }
                }
                let (xl, yl) = knots[knots.len() - 1];
                yl + slopes[slopes.len() - 1] * (x - xl)
            }
        }
    }

    /// `U(x)` on extended reals; `U(+∞) = sup U`.
    pub fn value(&self, x: ExtReal<S>) -> ExtReal<S> {
        if x.is_pos_inf() {
            self.sup()
        } else if x.is_neg_inf() {
            ExtReal::neg_inf()
        } else {
            ExtReal::of(self.value_finite(x.get()))
        }
    }

    /// `U(+∞) = sup_x U(x)`.
    pub fn sup(&self) -> ExtReal<S> {
        match self {
            Self::Linear | Self::Power { .. } => ExtReal::pos_inf(),
            Self::Exponential { .. } => ExtReal::of(S::one()),
            Self::PiecewiseLinear { knots } => {
                let slopes = Self::slopes(knots);
                if slopes[slopes.len() - 1] > S::zero() {
                    ExtReal::pos_inf()
                } else {
                    ExtReal::of(knots[knots.len() - 1].1)
                }
            }
        }
    }

    pub fn is_strictly_increasing(&self) -> bool {
        match self {
            Self::PiecewiseLinear { knots } => Self::slopes(knots).iter().all(|s| *s > S::zero()),
            _ => true,
        }
    }

    /// `U(kx) = kU(x)` for `k > 0`.
    pub fn is_positively_homogeneous(&self) -> bool {
        match self {
            Self::Linear => true,
            Self::PiecewiseLinear { knots } => {
                // a single kink at the origin passing through it
                let slopes = Self::slopes(knots);
                knots.iter().all(|(x, y)| {
                    let (x, y) = (*x, *y);
                    if x == S::zero() {
                        y == S::zero()
                    } else {
                        let k = if x < S::zero() { slopes[0] } else { slopes[slopes.len() - 1] };
                        (y - k * x).abs() <= S::lit(1e-12) * S::one().max(y.abs())
                    }
                })
            }
            _ => false,
        }
    }

    /// Generalised inverse `inf{x : U(x) >= y}`; `+∞` at or above `sup U`
    /// when the supremum is not attained.
    pub fn inverse(&self, y: ExtReal<S>) -> ExtReal<S> {
        if y.is_neg_inf() {
            return ExtReal::neg_inf();
        }
        if y >= self.sup() {
            return match self {
                Self::PiecewiseLinear { knots } if self.sup().is_finite() => {
                    // attained on the flat top: first knot reaching the sup
                    let top = self.sup().get();
                    let x = knots.iter().find(|(_, yk)| *yk >= top).map(|(x, _)| *x).unwrap();
                    if y.get() > top {
                        ExtReal::pos_inf()
                    } else {
                        ExtReal::of(x)
                    }
                }
                _ => ExtReal::pos_inf(),
            };
        }
        let y = y.get();
        let x = match self {
            Self::Linear => y,
            Self::Exponential { lambda } => -(-y).ln_1p() / *lambda,
            Self::Power { eta } => {
                if y >= S::zero() {
                    ((*eta * y).ln_1p() / *eta).exp_m1()
                } else {
                    y
                }
            }
            Self::PiecewiseLinear { knots } => {
                let slopes = Self::slopes(knots);
                if y <= knots[0].1 {
                    knots[0].0 + (y - knots[0].1) / slopes[0]
                } else {
                    let mut out = None;
                    for (k, w) in knots.windows(2).enumerate() {
                        if y <= w[1].1 && slopes[k] > S::zero() {
                            out = Some(w[0].0 + (y - w[0].1) / slopes[k]);
                            break;
                        }
                    }
                    out.unwrap_or_else(|| {
                        let (xl, yl) = knots[knots.len() - 1];
                        xl + (y - yl) / slopes[slopes.len() - 1]
                    })
                }
            }
        };
        ExtReal::of(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_values_and_inverse() {
        let u = UtilitySpec::Exponential { lambda: 1.0_f64 };
        u.validate().unwrap();
        assert_eq!(u.value_finite(0.0), 0.0);
        assert_eq!(u.sup(), ExtReal::of(1.0));
        for &x in &[-3.0, -0.1, 0.0, 0.7, 5.0] {
            let y = u.value(ExtReal::of(x));
            assert!((u.inverse(y).get() - x).abs() < 1e-12);
        }
        assert!(u.inverse(ExtReal::of(1.0)).is_pos_inf());
    }

    #[test]
    fn power_is_c1_and_invertible() {
        let u = UtilitySpec::Power { eta: 0.5_f64 };
        u.validate().unwrap();
        let h = 1e-6_f64;
        let left = (u.value_finite(0.0) - u.value_finite(-h)) / h;
        let right = (u.value_finite(h) - u.value_finite(0.0)) / h;
        assert!((left - right).abs() < 1e-5);
        for &x in &[-2.0, 0.0, 0.3, 9.0] {
            assert!((u.inverse(ExtReal::of(u.value_finite(x))).get() - x).abs() < 1e-10);
        }
        assert!(UtilitySpec::Power { eta: 1.5 }.validate().is_err());
    }

    #[test]
    fn piecewise_validation() {
        let ok = UtilitySpec::PiecewiseLinear {
            knots: vec![(-1.0, -2.0), (0.0, 0.0), (1.0, 0.5)],
        };
        ok.validate().unwrap();
        assert!(ok.is_positively_homogeneous());
        assert_eq!(ok.value_finite(-3.0), -6.0);
        assert_eq!(ok.value_finite(4.0), 2.0);
        assert_eq!(ok.inverse(ExtReal::of(-6.0)).get(), -3.0);
        assert_eq!(ok.inverse(ExtReal::of(2.0)).get(), 4.0);

        let convex = UtilitySpec::PiecewiseLinear {
            knots: vec![(0.0, 0.0), (1.0, 0.5), (2.0, 2.0)],
        };
        assert!(convex.validate().is_err());
        let decreasing = UtilitySpec::PiecewiseLinear {
            knots: vec![(0.0, 1.0), (1.0, 0.0)],
        };
        assert!(decreasing.validate().is_err());
    }

    #[test]
    fn capped_piecewise_has_finite_sup() {
        let capped = UtilitySpec::PiecewiseLinear {
            knots: vec![(0.0, 0.0), (1.0, 1.0), (2.0, 1.0)],
        };
        capped.validate().unwrap();
        assert_eq!(capped.sup(), ExtReal::of(1.0));
        assert!(!capped.is_strictly_increasing());
        assert_eq!(capped.inverse(ExtReal::of(1.0)).get(), 1.0);
    }
}
