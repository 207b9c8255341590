//! Inversion of monotone predicates by bracket expansion and bisection.

use crate::error::Result;
use crate::scalar::Scalar;

/// Bracket expansion stops at `±2^60`.
pub const BRACKET_CAP: f64 = 1152921504606846976.0;

/// Outcome of locating `inf{c : pred(c)}` for a predicate that is false
/// below some threshold and true above it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crossing<S> {
    /// The predicate holds down to `−cap`: the infimum is `−∞`.
    NegInf,
    /// `pred(lo)` is false, `pred(hi)` is true and `hi − lo <= tol` (or the
    /// two are adjacent floats).
    Bracket { lo: S, hi: S },
    /// The predicate fails up to `+cap`.
    Unreached,
}

#[derive(Debug, Clone, Copy)]
pub struct BracketOptions<S> {
    pub tol: S,
    pub cap: S,
    /// First probe point; expansion steps are measured from here.
    pub origin: S,
}

impl<S: Scalar> BracketOptions<S> {
    pub fn with_tol(tol: S) -> Self {
        Self {
            tol,
            cap: S::lit(BRACKET_CAP),
            origin: S::zero(),
        }
    }
}

/// Finds the threshold of a monotone predicate by doubling from `origin`
/// (steps `1, 2, 4, …` up to `cap`) and then bisecting to `tol`.
pub fn first_true<S, F>(mut pred: F, opts: BracketOptions<S>) -> Result<Crossing<S>>
where
    S: Scalar,
    F: FnMut(S) -> Result<bool>,
{
    let o = opts.origin;
    let (mut lo, mut hi);
    if pred(o)? {
        hi = o;
        let mut step = S::one();
        loop {
            let c = o - step;
            if !pred(c)? {
                lo = c;
                break;
            }
            hi = c;
            if step >= opts.cap {
                return Ok(Crossing::NegInf);
            }
            step = step * S::two();
        }
    } else {
        lo = o;
        let mut step = S::one();
        loop {
            let c = o + step;
            if pred(c)? {
                hi = c;
                break;
            }
            lo = c;
            if step >= opts.cap {
                return Ok(Crossing::Unreached);
            }
            step = step * S::two();
        }
    }
    bisect(&mut pred, &mut lo, &mut hi, opts.tol)?;
    Ok(Crossing::Bracket { lo, hi })
}

/// Shrinks `[lo, hi]` with `pred(lo) = false`, `pred(hi) = true` until the
/// width is at most `tol` or no float lies strictly between the ends.
pub fn bisect<S, F>(pred: &mut F, lo: &mut S, hi: &mut S, tol: S) -> Result<()>
where
    S: Scalar,
    F: FnMut(S) -> Result<bool>,
{
    while *hi - *lo > tol {
        let mid = *lo + (*hi - *lo) * S::half();
        if mid <= *lo || mid >= *hi {
            break;
        }
        if pred(mid)? {
            *hi = mid;
        } else {
            *lo = mid;
        }
    }
    Ok(())
}

/// The point of `[lo, hi]` on the coarsest dyadic grid `k·2^e`; `0` when
/// the interval contains it.
pub fn simplest_in<S: Scalar>(lo: S, hi: S) -> S {
    if lo <= S::zero() && hi >= S::zero() {
        return S::zero();
    }
    let top = lo.abs().max(hi.abs());
    if !top.is_finite() {
        return hi;
    }
    let mut e = S::two().powi(top.log2().floor().to_i32().unwrap_or(0) + 1);
    while e > S::zero() {
        let c = (lo / e).ceil() * e;
        if c <= hi && c >= lo {
            return c;
        }
        e = e * S::half();
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thresh(c: f64) -> impl FnMut(f64) -> Result<bool> {
        move |x| Ok(x >= c)
    }

    #[test]
    fn finds_positive_and_negative_thresholds() {
        for &c in &[0.0, 1.0 / 3.0, -7.25, 12345.678, -1e9] {
            match first_true(thresh(c), BracketOptions::with_tol(1e-10)).unwrap() {
                Crossing::Bracket { lo, hi } => {
                    assert!(lo < c && hi >= c, "c={c} lo={lo} hi={hi}");
                    assert!(hi - lo <= 1e-10 || hi.abs() > 1e5);
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn simplest_points() {
        assert_eq!(simplest_in(-1e-11, 5e-11), 0.0);
        assert_eq!(simplest_in(0.3, 0.7), 0.5);
        assert_eq!(simplest_in(2.9, 3.2), 3.0);
        assert_eq!(simplest_in(-3.2, -2.9), -3.0);
        let (lo, hi) = (1.0 / 3.0, 1.0 / 3.0 + 1e-10);
        let c = simplest_in(lo, hi);
        assert!(c >= lo && c <= hi);
    }

    #[test]
    fn always_true_gives_neg_inf() {
        assert_eq!(
            first_true(|_: f64| Ok(true), BracketOptions::with_tol(1e-10)).unwrap(),
            Crossing::NegInf
        );
    }

    #[test]
    fn never_true_is_unreached() {
        assert_eq!(
            first_true(|_: f64| Ok(false), BracketOptions::with_tol(1e-10)).unwrap(),
            Crossing::Unreached
        );
    }

    #[test]
    fn f32_terminates_below_resolution() {
        let r = first_true(|x: f32| Ok(x >= 0.1), BracketOptions::with_tol(1e-12)).unwrap();
        match r {
            Crossing::Bracket { lo, hi } => assert!(lo < 0.1 && hi >= 0.1 && hi - lo < 1e-7),
            other => panic!("unexpected {other:?}"),
        }
    }
}
