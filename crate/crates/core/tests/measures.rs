use std::sync::Arc;

use perflat::lattice::{ExtReal, FilteredSpace, XVar};
use perflat::measures::{
    check_axioms, check_scale_invariance, evaluate, MeasureKind, MeasureSpec, PerformanceMeasure, UtilitySpec,
};
use perflat::random::{random_space, trial_rng, TreeShape};
use perflat::Result;

fn coin2() -> Arc<FilteredSpace<f64>> {
    Arc::new(FilteredSpace::coin2())
}

fn var(space: &Arc<FilteredSpace<f64>>, v: &[f64]) -> XVar<f64> {
    XVar::new(space.clone(), v.to_vec()).unwrap()
}

fn shipped() -> Vec<MeasureSpec<f64>> {
    vec![
        MeasureSpec::cond_expectation(),
        MeasureSpec::expected_utility(UtilitySpec::Power { eta: 0.5 }).unwrap(),
        MeasureSpec::exp_utility(1.0).unwrap(),
        MeasureSpec::certainty_equivalent(UtilitySpec::Exponential { lambda: 1.0 }).unwrap(),
        MeasureSpec::glr(),
        MeasureSpec::lpm_ratio(2.0).unwrap(),
        MeasureSpec::avar_ratio(UtilitySpec::Linear, 0.25).unwrap(),
        MeasureSpec::avar_ratio(UtilitySpec::Exponential { lambda: 0.5 }, 0.5).unwrap(),
    ]
}

#[test]
fn glr_examples() {
    let s = coin2();
    let glr = MeasureSpec::glr();
    assert_eq!(evaluate(&glr, 0, &var(&s, &[3.0, -1.0])).unwrap().get(0), ExtReal::of(2.0));
    assert_eq!(evaluate(&glr, 0, &var(&s, &[0.0, 0.0])).unwrap().get(0), ExtReal::zero());
    assert!(evaluate(&glr, 0, &var(&s, &[0.1, 0.1])).unwrap().get(0).is_pos_inf());
}

#[test]
fn exp_utility_and_ce_normalisation() {
    let s = coin2();
    let eu = MeasureSpec::exp_utility(1.0).unwrap();
    assert_eq!(evaluate(&eu, 0, &var(&s, &[0.0, 0.0])).unwrap().get(0), ExtReal::zero());
    let ce = MeasureSpec::certainty_equivalent(UtilitySpec::Exponential { lambda: 1.0 }).unwrap();
    for c in [-3.0, 0.0, 0.25, 4.0] {
        let v = evaluate(&ce, 0, &var(&s, &[c, c])).unwrap().get(0).get();
        assert!((v - c).abs() < 1e-12, "{v} vs {c}");
    }
}

#[test]
fn lpm_ratio_closed_form() {
    let s = coin2();
    let m = MeasureSpec::lpm_ratio(2.0).unwrap();
    // E = 1, sqrt(E[(X^-)^2]) = sqrt(0.5)
    let v = evaluate(&m, 0, &var(&s, &[3.0, -1.0])).unwrap().get(0).get();
    assert!((v - 1.0 / 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn avar_ratio_uses_worst_tail() {
    let s = coin2();
    let m = MeasureSpec::avar_ratio(UtilitySpec::Linear, 0.5).unwrap();
    // AVaR at 1/2 of (3, -1) is 1
    let v = evaluate(&m, 0, &var(&s, &[3.0, -1.0])).unwrap().get(0).get();
    assert!((v - 1.0).abs() < 1e-12);
    // nonpositive risk with positive reward gives +inf
    assert!(evaluate(&m, 0, &var(&s, &[3.0, 1.0])).unwrap().get(0).is_pos_inf());
}

#[test]
fn per_leaf_utilities_need_common_sup() {
    let bad = MeasureSpec::<f64>::new(MeasureKind::ExpectedUtility {
        utilities: vec![UtilitySpec::Linear, UtilitySpec::Exponential { lambda: 1.0 }],
        endowment: None,
    });
    assert!(bad.is_err());
}

#[test]
fn glr_passes_axioms_on_coin2() {
    let r = check_axioms(&MeasureSpec::glr(), &coin2(), 0, 500, 1).unwrap();
    assert!(r.all_passed(), "{r:#?}");
}

#[test]
fn glr_continuity_sequence_diverges() {
    let s = coin2();
    let glr = MeasureSpec::glr();
    for n in [10.0, 100.0, 1e4] {
        let v = evaluate(&glr, 0, &var(&s, &[1.0 - 1.0 / n, -1.0 / n])).unwrap().get(0).get();
        assert!((v - (n - 2.0)).abs() < 1e-6 * n);
    }
    assert!(evaluate(&glr, 0, &var(&s, &[1.0, 0.0])).unwrap().get(0).is_pos_inf());
}

#[test]
fn shipped_measures_pass_axioms_on_random_trees() {
    let mut rng = trial_rng(99, 0);
    let space = random_space::<f64, _>(&mut rng, TreeShape::default());
    for m in shipped() {
        for t in [0, 1] {
            let r = check_axioms(&m, &space, t, 200, 7).unwrap();
            assert!(r.all_passed(), "{}: {r:#?}", m.name());
        }
    }
}

#[test]
fn scale_invariance_detected_both_ways() {
    let space = coin2();
    for m in shipped() {
        let r = check_scale_invariance(&m, &space, 0, 200, 3).unwrap();
        assert_eq!(r.passed, m.is_scale_invariant(), "{}: {r:#?}", m.name());
        if !r.passed {
            assert!(r.witness.is_some());
        }
    }
}

/// `E[X]^2`: not monotone.
struct Squared;

impl PerformanceMeasure<f64> for Squared {
    fn bounds(&self) -> (ExtReal<f64>, ExtReal<f64>) {
        (ExtReal::zero(), ExtReal::pos_inf())
    }

    fn eval_atom_flagged(
        &self,
        space: &FilteredSpace<f64>,
        t: usize,
        atom: usize,
        x: &[ExtReal<f64>],
    ) -> Result<(ExtReal<f64>, bool)> {
        let p = space.conditional_probs(t, atom);
        let e = perflat::lattice::weighted_mean(&p, x).unwrap();
        Ok((e * e, false))
    }

    fn name(&self) -> String {
        "squared_mean".into()
    }
}

#[test]
fn broken_measure_yields_monotonicity_witness() {
    let s = coin2();
    let lo = evaluate(&Squared, 0, &var(&s, &[-2.0, -2.0])).unwrap().get(0);
    let hi = evaluate(&Squared, 0, &var(&s, &[-1.0, -1.0])).unwrap().get(0);
    assert!(hi < lo);
    let r = check_axioms(&Squared, &s, 0, 500, 1).unwrap();
    let mono = r.check("monotonicity").unwrap();
    assert!(!mono.passed);
    assert!(mono.witness.is_some());
}
