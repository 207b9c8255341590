use crate::error::{Error, Result};
use crate::lattice::{ExtReal, TVar, XVar};
use crate::measures::RiskAversion;
use crate::scalar::Scalar;

use super::induce::RiskPoint;

/// `ln E_t[e^{−λ X}]` on one atom, computed stably; `+∞` leaves contribute
/// `e^{−∞} = 0`.
fn log_mean_exp<S: Scalar>(cond: &[S], x: &[ExtReal<S>], lambda: S) -> ExtReal<S> {
    let terms: Vec<S> = cond
        .iter()
        .zip(x)
        .filter(|(_, xi)| !xi.is_pos_inf())
        .map(|(p, xi)| p.ln() - lambda * xi.get())
        .collect();
    let Some(top) = terms.iter().copied().reduce(S::max) else {
        return ExtReal::neg_inf();
    };
    let sum: S = terms.iter().map(|v| (*v - top).exp()).sum();
    ExtReal::of(top + sum.ln())
}

/// Entropic risk in log-level coordinates: `(ln E_t[e^{−λ_t X}] − w)/λ_t`
/// with `w = ln(1 − z)`.
///
/// Lets levels far below any representable `z` be handled, e.g. `w = 10^7`
/// stands for `z = 1 − e^{10^7}`.
pub fn entropic_log_level<S: Scalar>(lambda: &RiskAversion<S>, t: usize, w: S, x: &XVar<S>) -> Result<TVar<S>> {
    let space = x.space();
    space.check_stage(t)?;
    if let RiskAversion::Process(_) = lambda {
        lambda.validate_for(space)?;
    }
    let values = (0..space.num_atoms(t))
        .map(|a| {
            let l = lambda.at(t, a)?;
            let cond = space.conditional_probs(t, a);
            let lme = log_mean_exp(&cond, x.on_atom(t, a), l);
            Ok(if lme.is_neg_inf() {
                lme
            } else {
                ExtReal::of((lme.get() - w) / l)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TVar::bounded_above(space.clone(), t, values)
}

/// `ρ_t^z(X) = ln E_t[e^{−λ_t X}]/λ_t − ln(1 − z)/λ_t` for `z < 1`.
pub fn entropic_closed_form<S: Scalar>(lambda: &RiskAversion<S>, t: usize, z: S, x: &XVar<S>) -> Result<RiskPoint<S>> {
    if !(z < S::one()) || z.is_nan() {
        return Err(Error::LevelOutOfRange {
            z: z.as_f64(),
            lo: f64::NEG_INFINITY,
            hi: 1.0,
        });
    }
    let w = (-z).ln_1p();
    Ok(RiskPoint {
        z,
        values: entropic_log_level(lambda, t, w, x)?,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::lattice::FilteredSpace;

    #[test]
    fn known_values() {
        let s = Arc::new(FilteredSpace::<f64>::coin2());
        let l = RiskAversion::Constant(1.0);
        let zero = XVar::constant(s.clone(), 0.0);
        assert_eq!(entropic_closed_form(&l, 0, 0.0, &zero).unwrap().get(0).get(), 0.0);
        let e1 = 1.0 - (-1.0f64).exp();
        assert!((entropic_closed_form(&l, 0, e1, &zero).unwrap().get(0).get() - 1.0).abs() < 1e-15);
        let x = XVar::new(s.clone(), vec![1.0, -1.0]).unwrap();
        let v = entropic_closed_form(&l, 0, 0.0, &x).unwrap().get(0).get();
        assert!((v - 1.0f64.cosh().ln()).abs() < 1e-15);
        assert!(entropic_closed_form(&l, 0, 1.0, &x).is_err());
    }

    #[test]
    fn infinite_leaves_drop_out() {
        let s = Arc::new(FilteredSpace::<f64>::coin2());
        let l = RiskAversion::Constant(2.0);
        let x = XVar::from_ext(s.clone(), vec![ExtReal::pos_inf(), ExtReal::of(1.0)]).unwrap();
        let v = entropic_closed_form(&l, 0, 0.0, &x).unwrap().get(0).get();
        assert!((v - (0.5f64.ln() - 2.0) / 2.0).abs() < 1e-15);
        let all = XVar::pos_inf(s);
        assert!(entropic_closed_form(&l, 0, 0.0, &all).unwrap().get(0).is_neg_inf());
    }
}
