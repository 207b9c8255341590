use perflat::dividends::DividendProcess;
use perflat::io::*;
use perflat::lattice::{ExtReal, FilteredSpace, TVar};
use perflat::measures::{evaluate, MeasureSpec, UtilitySpec};
use perflat::random::{random_space, random_xvar, trial_rng, TreeShape};
use perflat::Error;

const COIN2: &str = r#"{
  "name": "coin2",
  "times": [0, 1],
  "leaves": [{"id": "H", "p": 0.5}, {"id": "T", "p": 0.5}],
  "atoms": {"0": [["H", "T"]], "1": [["H"], ["T"]]}
}"#;

#[test]
fn coin2_glr_example() {
    let s = space_from_json::<f64>(COIN2).unwrap();
    assert_eq!(s.name.as_deref(), Some("coin2"));
    let x = xvar_from_json(r#"{"space": "coin2", "values": {"H": 3, "T": -1}}"#, &s).unwrap();
    let m = measure_from_json::<f64>(r#"{"kind": "glr", "params": {}, "z_d": 0, "z_u": "inf"}"#, None).unwrap();
    assert_eq!(evaluate(&m, 0, &x).unwrap().get(0).get(), 2.0);
}

#[test]
fn space_errors_name_the_invariant() {
    let bad = COIN2.replace("\"p\": 0.5}, {\"id\": \"T\", \"p\": 0.5", "\"p\": 0.5}, {\"id\": \"T\", \"p\": 0.4");
    let e = space_from_json::<f64>(&bad).unwrap_err();
    assert!(e.to_string().contains("sum to"), "{e}");
    let e = space_from_json::<f64>(&COIN2.replace("[\"H\"], [\"T\"]", "[\"H\"], [\"Q\"]")).unwrap_err();
    assert!(e.to_string().contains("unknown leaf id"), "{e}");
    let e = space_from_json::<f64>("{\"times\": [0, 1],\n \"leaves\": 3}").unwrap_err();
    assert!(matches!(e, Error::Parse(_)) && e.to_string().contains("line 2"), "{e}");
}

#[test]
fn defaults_for_root_and_leaves() {
    let s = space_from_json::<f64>(r#"{"times": [0, 1], "leaves": [{"id": "a", "p": 0.25}, {"id": "b", "p": 0.75}], "atoms": {}}"#).unwrap();
    assert_eq!(s.space.num_atoms(0), 1);
    assert_eq!(s.space.num_atoms(1), 2);
}

#[test]
fn space_and_variable_round_trip() {
    for i in 0..20 {
        let mut rng = trial_rng(40, i);
        let space = random_space::<f64, _>(&mut rng, TreeShape::default());
        let text = space_to_json(&space, Some("r"));
        let back = space_from_json::<f64>(&text).unwrap();
        assert_eq!(*back.space, *space);
        let x = random_xvar(&mut rng, &space, -1e3, 1e3, 0.1);
        let y = xvar_from_json(&xvar_to_json(&x, Some("r")), &back).unwrap();
        assert_eq!(x.values(), y.values());
    }
}

#[test]
fn variable_errors() {
    let s = space_from_json::<f64>(COIN2).unwrap();
    assert!(xvar_from_json(r#"{"values": {"H": 1}}"#, &s).is_err());
    assert!(xvar_from_json(r#"{"values": {"H": 1, "T": 2, "X": 0}}"#, &s).is_err());
    assert!(xvar_from_json(r#"{"space": "other", "values": {"H": 1, "T": 2}}"#, &s).is_err());
    assert!(xvar_from_json(r#"{"values": {"H": "inf", "T": "-inf"}}"#, &s).is_err());
    let x = xvar_from_json(r#"{"values": {"H": "inf", "T": -2}}"#, &s).unwrap();
    assert!(x.values()[0].is_pos_inf() && x.values()[1].get() == -2.0);
}

#[test]
fn measure_round_trip() {
    let space = FilteredSpace::<f64>::coin2();
    let ms = vec![
        MeasureSpec::glr(),
        MeasureSpec::cond_expectation(),
        MeasureSpec::exp_utility(0.7).unwrap(),
        MeasureSpec::exp_utility_process(vec![vec![1.0], vec![0.5, 2.0]]).unwrap(),
        MeasureSpec::expected_utility(UtilitySpec::Power { eta: 0.5 }).unwrap(),
        MeasureSpec::certainty_equivalent(UtilitySpec::Exponential { lambda: 1.0 }).unwrap(),
        MeasureSpec::lpm_ratio(2.0).unwrap(),
        MeasureSpec::avar_ratio(UtilitySpec::Linear, 0.25).unwrap().with_eps_strict(1e-9).unwrap(),
        MeasureSpec::expected_utility(UtilitySpec::PiecewiseLinear {
            knots: vec![(-1.0, -2.0), (0.0, 0.0), (1.0, 0.5)],
        })
        .unwrap(),
    ];
    for m in ms {
        let v = measure_to_value(&m, Some(&space)).unwrap();
        let back = measure_from_json::<f64>(&v.to_string(), Some(&space)).unwrap();
        assert_eq!(back, m, "{v}");
    }
}

#[test]
fn measure_errors() {
    for bad in [
        r#"{"kind": "sharpe"}"#,
        r#"{"kind": "lpm_ratio", "params": {}}"#,
        r#"{"kind": "lpm_ratio", "params": {"p": 0.5}}"#,
        r#"{"kind": "glr", "params": {"p": 2}}"#,
        r#"{"kind": "glr", "z_d": "-inf"}"#,
        r#"{"kind": "exp_utility", "params": {"lambda": -1}}"#,
        r#"{"kind": "cond_expectation", "params": {"q": {"H": 1}}}"#,
    ] {
        assert!(measure_from_json::<f64>(bad, None).is_err(), "{bad}");
    }
}

#[test]
fn dividend_round_trip() {
    let s = space_from_json::<f64>(COIN2).unwrap();
    let d = dividend_from_json(r#"{"space": "coin2", "payments": {"0": {"0:0": -1}, "1": {"H": "inf", "1:1": 2.5}}}"#, &s).unwrap();
    assert_eq!(d.payment(0).unwrap().get(0).get(), -1.0);
    assert!(d.payment(1).unwrap().get(0).is_pos_inf());
    let back = dividend_from_json(&dividend_to_json(&d, Some("coin2")), &s).unwrap();
    assert_eq!(back.payments().len(), 2);
    for (t, p) in d.payments() {
        assert_eq!(back.payment(*t).unwrap().values(), p.values());
    }
    assert!(dividend_from_json(r#"{"payments": {"1": {"H": "-inf", "T": 0}}}"#, &s).is_err());
    assert!(dividend_from_json(r#"{"payments": {"2": {"H": 1, "T": 0}}}"#, &s).is_err());
    assert!(dividend_from_json(r#"{"payments": {"1": {"H": 1}}}"#, &s).is_err());
    let z = DividendProcess::single(TVar::constant(s.space.clone(), 0, ExtReal::of(1.0)).unwrap()).unwrap();
    assert!(dividend_to_json(&z, None).contains("\"0:0\": 1.0"));
}
