use std::sync::Arc;

use perflat::dividends::*;
use perflat::dynamics::{DynamicMeasure, Verdict};
use perflat::lattice::{ExtReal, FilteredSpace, TVar, XVar};
use perflat::measures::{evaluate, MeasureSpec, UtilitySpec};
use perflat::random::{random_space, random_xvar, trial_rng, TreeShape};

fn binomial2() -> Arc<FilteredSpace<f64>> {
    Arc::new(FilteredSpace::binomial(2, 0.5).unwrap())
}

fn stage_var(space: &Arc<FilteredSpace<f64>>, t: usize, v: &[f64]) -> TVar<f64> {
    TVar::new(space.clone(), t, v.iter().map(|x| ExtReal::of(*x)).collect()).unwrap()
}

#[test]
fn terminal_payment_recovers_measure() {
    let space = binomial2();
    let m = MeasureSpec::glr();
    for i in 0..50 {
        let x = random_xvar(&mut trial_rng(3, i), &space, -4.0, 4.0, 0.1);
        let d = DividendProcess::terminal(&x).unwrap();
        for t in 0..=2 {
            assert_eq!(lift_evaluate(&m, t, &d).unwrap(), evaluate(&m, t, &x).unwrap());
        }
    }
}

#[test]
fn payment_timing_is_irrelevant() {
    let space = binomial2();
    let m = MeasureSpec::lpm_ratio(2.0).unwrap();
    let early = DividendProcess::single(stage_var(&space, 1, &[1.0, -2.0])).unwrap();
    let late = DividendProcess::single(stage_var(&space, 2, &[1.0, 1.0, -2.0, -2.0])).unwrap();
    let a = lift_evaluate(&m, 1, &early).unwrap();
    let b = lift_evaluate(&m, 1, &late).unwrap();
    assert_eq!(a, b);
    let moved = DividendProcess::zero(space.clone()).add_at(&stage_var(&space, 1, &[1.0, -2.0]), 2).unwrap();
    assert_eq!(moved.payment(2).unwrap(), late.payment(2).unwrap());
}

#[test]
fn zero_process_and_past_payments() {
    let space = binomial2();
    let m = MeasureSpec::glr();
    let zero = DividendProcess::zero(space.clone());
    let x0 = XVar::new(space.clone(), vec![0.0; 4]).unwrap();
    assert_eq!(lift_evaluate(&m, 1, &zero).unwrap(), evaluate(&m, 1, &x0).unwrap());
    // payments before t are ignored
    let d = DividendProcess::new(space.clone(), vec![stage_var(&space, 0, &[-7.0]), stage_var(&space, 2, &[3.0, -1.0, 2.0, 2.0])]).unwrap();
    assert_eq!(lift_evaluate(&m, 1, &d).unwrap(), lift_evaluate(&m, 1, &d.from_stage(1)).unwrap());
}

#[test]
fn process_validation() {
    let space = binomial2();
    let neg = TVar::new(space.clone(), 1, vec![ExtReal::neg_inf(), ExtReal::of(0.0)]).unwrap();
    assert!(DividendProcess::single(neg).is_err());
    let a = stage_var(&space, 1, &[1.0, 2.0]);
    assert!(DividendProcess::new(space.clone(), vec![a.clone(), a.clone()]).is_err());
    assert!(DividendProcess::single(a.clone()).unwrap().scale(-1.0).is_err());
    assert!(lift_tvar(&stage_var(&space, 2, &[0.0; 4]), 1).is_err());
    let inf = TVar::new(space.clone(), 1, vec![ExtReal::pos_inf(), ExtReal::of(1.0)]).unwrap();
    let d = DividendProcess::new(space.clone(), vec![inf, stage_var(&space, 2, &[-1.0, 0.0, 5.0, 1.0])]).unwrap();
    let agg = d.aggregate(0).unwrap();
    assert!(agg.values()[0].is_pos_inf() && agg.values()[1].is_pos_inf());
    assert_eq!(agg.values()[2].get(), 6.0);
}

#[test]
fn lift_axioms_for_shipped_measures() {
    let mut rng = trial_rng(17, 0);
    let space = random_space::<f64, _>(&mut rng, TreeShape { stages: 3, ..TreeShape::default() });
    let cases = [
        (MeasureSpec::glr(), true),
        (MeasureSpec::lpm_ratio(2.0).unwrap(), true),
        (MeasureSpec::exp_utility(1.0).unwrap(), false),
        (MeasureSpec::certainty_equivalent(UtilitySpec::Exponential { lambda: 1.0 }).unwrap(), false),
    ];
    for (m, cai) in cases {
        let r = check_lift_axioms(&m, &space, 150, 5).unwrap();
        assert!(r.all_passed(), "{r:#?}");
        assert_eq!(r.checks.len(), LIFT_PROPERTIES.len());
        assert_eq!(r.check("scale_invariance").unwrap().applicable, cai);
    }
}

#[test]
fn lift_consistency_glr() {
    let space = binomial2();
    let d = DynamicMeasure::uniform(MeasureSpec::glr());
    let r = check_lift_time_consistency(&d, &space, &[0.5, 1.0, 2.0], 100, 2_000, 3).unwrap();
    assert_eq!(r.variable_verdict, Verdict::ConsistentOnSample);
    assert_eq!(r.process_verdict, Verdict::ConsistentOnSample);
    assert!(r.verdicts_agree && r.restricted.checks > 0);
    assert!(r.transported.is_none());
    // payments between s and t break the process-level property even for GLR
    assert!(r.unrestricted.violations > 0 && r.unrestricted.witness.is_some());
}

#[test]
fn lift_consistency_lpm_transports() {
    let space = binomial2();
    let d = DynamicMeasure::uniform(MeasureSpec::lpm_ratio(2.0).unwrap());
    let r = check_lift_time_consistency(&d, &space, &[0.5, 1.0, 2.0], 50, 20_000, 7).unwrap();
    assert_eq!(r.variable_verdict, Verdict::Counterexample);
    let w = r.transported.as_ref().expect("transported witness");
    assert_eq!(w.payments.keys().copied().collect::<Vec<_>>(), vec![2]);
    assert_eq!(r.process_verdict, Verdict::Counterexample);
    assert!(r.verdicts_agree);
}
