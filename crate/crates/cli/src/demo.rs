//! Worked examples recomputed for `paper-demo`.

use std::sync::Arc;

use serde_json::{json, Map, Value};

use perflat::dynamics::{search_counterexample, DynamicMeasure};
use perflat::io::{nums, Num};
use perflat::measures::{evaluate, RiskAversion};
use perflat::risk::{entropic_closed_form, glr_dual_risk, induce_risk, reconstruct, risk_curve, InducedFamily};
use perflat::{Measure, Result, Space, Utility, Var};

use crate::Failure;

pub const FIXTURES: &str = include_str!("../fixtures/paper_demo.json");

/// Fixtures hold exact values where known; bisection output is within
/// this of them, relative to `max(1, |v|)`.
const TOL: f64 = 1e-8;

fn var(space: &Arc<Space>, v: &[f64]) -> Result<Var> {
    Var::new(space.clone(), v.to_vec())
}

fn at0(m: &Measure, x: &Var) -> Result<Num> {
    Ok(Num::of(evaluate(m, 0, x)?.get(0)))
}

pub fn compute() -> std::result::Result<Value, Failure> {
    Ok(compute_inner()?)
}

fn compute_inner() -> Result<Value> {
    let coin = Arc::new(Space::coin2());
    let glr = Measure::glr();
    let x31 = var(&coin, &[3.0, -1.0])?;
    let zero = Var::constant(coin.clone(), 0.0);
    let mut out = Map::new();
    let mut put = |k: &str, v: Value| {
        out.insert(k.to_string(), v);
    };

    put("glr_coin2", json!(at0(&glr, &x31)?));
    put("glr_zero", json!(at0(&glr, &zero)?));
    put("glr_one_tenth", json!(at0(&glr, &Var::constant(coin.clone(), 0.1))?));
    put(
        "glr_continuity_n10",
        json!(at0(&glr, &var(&coin, &[1.0 - 0.1, -0.1])?)?),
    );
    put("exp_utility_zero", json!(at0(&Measure::exp_utility(1.0)?, &zero)?));
    put(
        "cce_constant_0.7",
        json!(at0(
            &Measure::certainty_equivalent(Utility::Exponential { lambda: 1.0 })?,
            &Var::constant(coin.clone(), 0.7)
        )?),
    );

    put("induced_glr_coin2_z2", json!(Num::of(induce_risk(&glr, 0, 2.0, &x31)?.get(0))));
    for z in [1.0, 2.0] {
        put(&format!("induced_glr_zero_z{z}"), json!(Num::of(induce_risk(&glr, 0, z, &zero)?.get(0))));
    }
    let curve = risk_curve(&InducedFamily::new(glr.clone()), 0, &x31, &[1.0, 2.0, 3.0])?;
    put("glr_curve_123", json!(curve.rho.iter().map(|r| r[0]).collect::<Vec<_>>()));

    let one = RiskAversion::Constant(1.0);
    let ent = |z: f64, x: &Var| -> Result<Num> { Ok(Num::of(entropic_closed_form(&one, 0, z, x)?.get(0))) };
    put(
        "entropic_zero",
        json!([ent(0.0, &zero)?, ent(0.5, &zero)?, ent(1.0 - (-1.0f64).exp(), &zero)?]),
    );
    let x11 = var(&coin, &[1.0, -1.0])?;
    put("entropic_coin2_cosh", json!(ent(0.0, &x11)?));
    put(
        "entropic_coin2_bisection",
        json!(Num::of(induce_risk(&Measure::exp_utility(1.0)?, 0, 0.0, &x11)?.get(0))),
    );

    put(
        "reconstruct_glr_coin2",
        json!(Num::of(reconstruct(&InducedFamily::new(glr.clone()), 0, &x31)?.values.get(0))),
    );
    let d = glr_dual_risk(0, 1.0, &x11)?;
    put(
        "glr_dual_third",
        json!({"rho": Num::of(d.risk.get(0)), "density": d.optimal.density.iter().map(|v| Num(*v)).collect::<Vec<_>>()}),
    );

    let bin = Arc::new(Space::binomial(2, 0.5)?);
    let lpm = DynamicMeasure::uniform(Measure::lpm_ratio(2.0)?);
    let r = search_counterexample(&lpm, &bin, 100_000, 7)?;
    let w = r.witness.expect("the search finds a counterexample");
    let g = w.globalize(&bin)?;
    put(
        "lpm_counterexample",
        json!({
            "witness": w,
            "reverified": r.search.map(|s| s.reverified),
            "global_beta_t": nums(evaluate(&Measure::lpm_ratio(2.0)?, w.t, &g)?.values()),
            "global_beta_s": nums(evaluate(&Measure::lpm_ratio(2.0)?, w.s, &g)?.values()),
        }),
    );
    Ok(Value::Object(out))
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= TOL * a.abs().max(b.abs()).max(1.0)
}

fn walk(path: &str, e: &Value, c: &Value, out: &mut Vec<String>) {
    match (e, c) {
        (Value::Number(a), Value::Number(b)) => {
            let (a, b) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            if !close(a, b) {
                out.push(format!("{path}: expected {a:?}, got {b:?}"));
            }
        }
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in a {
                match b.get(k) {
                    Some(w) => walk(&format!("{path}.{k}"), v, w, out),
                    None => out.push(format!("{path}.{k}: missing")),
                }
            }
            for k in b.keys().filter(|k| !a.contains_key(*k)) {
                out.push(format!("{path}.{k}: not in fixtures"));
            }
        }
        (Value::Array(a), Value::Array(b)) if a.len() == b.len() => {
            for (i, (v, w)) in a.iter().zip(b).enumerate() {
                walk(&format!("{path}[{i}]"), v, w, out);
            }
        }
        _ if e == c => {}
        _ => out.push(format!("{path}: expected {e}, got {c}")),
    }
}

/// Differences between fixture and computed values.
pub fn diff(expected: &Value, computed: &Value) -> Vec<String> {
    let mut out = Vec::new();
    walk("$", expected, computed, &mut out);
    out
}
