//! Randomized verification of the performance-measure axioms.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bisect::{first_true, BracketOptions, Crossing};
use crate::error::Result;
use crate::io::{nums, Num};
use crate::lattice::{paste, ExtReal, FilteredSpace, TVar, XVar};
use crate::random::{random_event, random_level, random_nonneg, random_stage_var, random_xvar, trial_rng};
use crate::scalar::Scalar;

use super::spec::{evaluate_flagged, PerformanceMeasure};

/// Relative tolerance for axiom comparisons.
const TOL: f64 = 1e-9;
/// Finite values above this count as having reached `+∞` in limits.
const BIG: f64 = 1e6;

#[derive(Debug, Clone, Serialize)]
pub struct AxiomWitness {
    pub trial: u64,
    pub atom: usize,
    pub detail: String,
    /// Named variables involved, leaf values in leaf order.
    pub vars: Vec<(String, Vec<Num>)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomCheck {
    pub name: String,
    pub passed: bool,
    pub trials: usize,
    pub violations: usize,
    pub witness: Option<AxiomWitness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub measure: String,
    pub stage: usize,
    pub seed: u64,
    pub trials: usize,
    /// Evaluations whose strict case split fell inside the tie tolerance.
    pub ties: usize,
    pub checks: Vec<AxiomCheck>,
}

impl AxiomReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AxiomCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub(crate) fn scale<S: Scalar>(b: ExtReal<S>) -> S {
    if b.is_finite() {
        S::one().max(b.get().abs())
    } else {
        S::one()
    }
}

/// `a >= b` up to a relative tolerance; infinities compared exactly.
pub(crate) fn ext_ge<S: Scalar>(a: ExtReal<S>, b: ExtReal<S>, tol: S) -> bool {
    if a.is_finite() && b.is_finite() {
        a.get() >= b.get() - tol * scale(b)
    } else {
        a >= b
    }
}

/// `a = b` up to a relative tolerance; infinities compared symbolically.
pub(crate) fn ext_close<S: Scalar>(a: ExtReal<S>, b: ExtReal<S>, tol: S) -> bool {
    ext_ge(a, b, tol) && ext_ge(b, a, tol)
}

type Finding = (usize, String, Vec<(String, Vec<Num>)>);

struct Trial {
    findings: Vec<Option<Finding>>,
    ties: usize,
}

const NAMES: [&str; 7] = [
    "quasi_concavity",
    "bounds",
    "monotonicity",
    "strict_shift",
    "continuity_from_below",
    "locality",
    "level_set_lower_bound",
];

/// Property-based check of quasi-concavity, non-random bounds, monotonicity,
/// strict increase over positive shifts, continuity from below, locality
/// (including pasting of level sets) and the uniform lower bound of level
/// sets, at stage `t` on `space`.
///
/// Trials run in parallel; each uses its own stream derived from
/// `(seed, trial)`, so the report is independent of scheduling.
pub fn check_axioms<S, M>(m: &M, space: &Arc<FilteredSpace<S>>, t: usize, trials: usize, seed: u64) -> Result<AxiomReport>
where
    S: Scalar,
    M: PerformanceMeasure<S> + ?Sized,
{
    space.check_stage(t)?;
    let results = (0..trials as u64)
        .into_par_iter()
        .map(|i| run_trial(m, space, t, seed, i))
        .collect::<Result<Vec<_>>>()?;
    let mut checks: Vec<AxiomCheck> = NAMES
        .iter()
        .map(|n| AxiomCheck {
            name: n.to_string(),
            passed: true,
            trials,
            violations: 0,
            witness: None,
        })
        .collect();
    let mut ties = 0;
    for (i, r) in results.into_iter().enumerate() {
        ties += r.ties;
        for (c, f) in checks.iter_mut().zip(r.findings) {
            if let Some((atom, detail, vars)) = f {
                c.passed = false;
                c.violations += 1;
                if c.witness.is_none() {
                    c.witness = Some(AxiomWitness {
                        trial: i as u64,
                        atom,
                        detail,
                        vars,
                    });
                }
            }
        }
    }
    Ok(AxiomReport {
        measure: m.name(),
        stage: t,
        seed,
        trials,
        ties,
        checks,
    })
}

fn run_trial<S, M>(m: &M, space: &Arc<FilteredSpace<S>>, t: usize, seed: u64, trial: u64) -> Result<Trial>
where
    S: Scalar,
    M: PerformanceMeasure<S> + ?Sized,
{
    let mut rng = trial_rng(seed, trial);
    let tol = S::lit(TOL);
    let (zd, zu) = m.bounds();
    let n_atoms = space.num_atoms(t);
    let var = |name: &str, x: &XVar<S>| (name.to_string(), nums(x.values()));
    let mut ties = 0;
    let mut eval = |x: &XVar<S>| -> Result<TVar<S>> {
        let (v, flags) = evaluate_flagged(m, t, x)?;
        ties += flags.iter().filter(|f| **f).count();
        Ok(v)
    };

    let x = random_xvar(&mut rng, space, -5.0, 5.0, 0.1);
    let y = random_xvar(&mut rng, space, -5.0, 5.0, 0.1);
    let bx = eval(&x)?;
    let by = eval(&y)?;
    let mut findings: Vec<Option<Finding>> = Vec::with_capacity(NAMES.len());

    // quasi-concavity
    let c = S::lit(rng.gen_range(0.0..=1.0));
    let mix = x.convex(&y, c)?;
    let bm = eval(&mix)?;
    findings.push((0..n_atoms).find_map(|a| {
        let lower = bx.get(a).min(by.get(a));
        (!ext_ge(bm.get(a), lower, tol)).then(|| {
            (
                a,
                format!("beta(cX+(1-c)Y) = {} < min = {lower} with c = {c}", bm.get(a)),
                vec![var("X", &x), var("Y", &y)],
            )
        })
    }));

    // bounds: z_d < z_u, values in range, z_u at +inf and z_d in the limit
    let mut bound_fail: Option<Finding> = None;
    if zd >= zu {
        bound_fail = Some((0, format!("z_d = {zd} is not below z_u = {zu}"), vec![]));
    }
    if bound_fail.is_none() {
        for (name, v, xv) in [("X", &bx, &x), ("Y", &by, &y)] {
            if let Some(a) = (0..n_atoms).find(|&a| v.get(a) < zd || v.get(a) > zu) {
                bound_fail = Some((a, format!("value {} outside [{zd}, {zu}]", v.get(a)), vec![var(name, xv)]));
                break;
            }
        }
    }
    if bound_fail.is_none() {
        let top = eval(&XVar::pos_inf(space.clone()))?;
        if let Some(a) = (0..n_atoms).find(|&a| top.get(a) != zu) {
            bound_fail = Some((a, format!("beta(+inf) = {} differs from z_u = {zu}", top.get(a)), vec![]));
        }
    }
    if bound_fail.is_none() {
        let mut prev: Option<TVar<S>> = None;
        for k in 0..12 {
            let c = -S::lit(10f64.powi(k));
            let v = eval(&XVar::constant(space.clone(), c))?;
            if let Some(p) = &prev {
                if let Some(a) = (0..n_atoms).find(|&a| !ext_ge(p.get(a), v.get(a), tol)) {
                    bound_fail = Some((a, format!("beta not monotone along constants at {c}"), vec![]));
                    break;
                }
            }
            prev = Some(v);
        }
        if bound_fail.is_none() {
            let far_c = -S::max_value().sqrt();
            let far = eval(&XVar::constant(space.clone(), far_c))?;
            let lim_ok = |a: usize| {
                let v = far.get(a);
                if zd.is_neg_inf() {
                    v.is_neg_inf() || v.get() <= -S::lit(BIG)
                } else {
                    ext_close(v, zd, S::lit(1e-6))
                }
            };
            if let Some(a) = (0..n_atoms).find(|&a| !lim_ok(a)) {
                bound_fail = Some((a, format!("beta({far_c}) = {} does not approach z_d = {zd}", far.get(a)), vec![]));
            }
        }
    }
    findings.push(bound_fail);

    // monotonicity
    let mut delta = random_nonneg(&mut rng, space, 3.0);
    if rng.gen_bool(0.2) {
        let leaf = rng.gen_range(0..space.num_leaves());
        let mut vals = delta.values().to_vec();
        vals[leaf] = ExtReal::pos_inf();
        delta = XVar::from_ext(space.clone(), vals)?;
    }
    let up = x.add(&delta)?;
    let bu = eval(&up)?;
    findings.push((0..n_atoms).find_map(|a| {
        (!ext_ge(bu.get(a), bx.get(a), tol)).then(|| {
            (
                a,
                format!("beta(X+D) = {} < beta(X) = {}", bu.get(a), bx.get(a)),
                vec![var("X", &x), var("D", &delta)],
            )
        })
    }));

    // strict increase over positive constant shifts
    let c = S::lit(rng.gen_range(0.01..=2.0));
    let shifted = x.shift(c);
    let bs = eval(&shifted)?;
    findings.push((0..n_atoms).find_map(|a| {
        let applies = bx.get(a) < zu && bs.get(a) > zd;
        (applies && bs.get(a) <= bx.get(a)).then(|| {
            (
                a,
                format!("beta(X+{c}) = {} not above beta(X) = {}", bs.get(a), bx.get(a)),
                vec![var("X", &x)],
            )
        })
    }));

    // continuity from below along three kinds of increasing sequences
    let mut cont_fail: Option<Finding> = None;
    let finite_x = random_xvar(&mut rng, space, -5.0, 5.0, 0.0);
    let dir = random_nonneg(&mut rng, space, 1.0).shift(S::lit(0.01));
    let mut sequences: Vec<(&str, XVar<S>, Vec<XVar<S>>)> = Vec::new();
    sequences.push((
        "X - 10^-k",
        finite_x.clone(),
        (1..=12).map(|k| finite_x.shift(-S::lit(10f64.powi(-k)))).collect(),
    ));
    // r_n = u_n 10^-n with u_n in [0.5, 1] decreases to zero
    let random_seq = (1..=12)
        .map(|n| {
            let r = rng.gen_range(0.5..=1.0) * 10f64.powi(-n);
            let step = dir.scale(S::lit(r))?;
            finite_x.zip_with(&step, |a, b| a - b)
        })
        .collect::<Result<Vec<_>>>()?;
    sequences.push(("X - r_n D", finite_x.clone(), random_seq));
    let with_inf = random_xvar(&mut rng, space, -5.0, 5.0, 0.3);
    sequences.push((
        "X ^ 10^k",
        with_inf.clone(),
        (1..=12)
            .map(|k| S::lit(10f64.powi(k)))
            .chain(std::iter::once(S::max_value().sqrt()))
            .map(|n| with_inf.truncate(n))
            .collect(),
    ));
    for (label, target, seq) in sequences {
        let limit = eval(&target)?;
        let mut prev: Option<TVar<S>> = None;
        for xn in &seq {
            let v = eval(xn)?;
            if let Some(p) = &prev {
                if let Some(a) = (0..n_atoms).find(|&a| !ext_ge(v.get(a), p.get(a), tol)) {
                    cont_fail = Some((
                        a,
                        format!("{label}: sequence of values decreases ({} after {})", v.get(a), p.get(a)),
                        vec![var("X", &target)],
                    ));
                    break;
                }
            }
            prev = Some(v);
        }
        if cont_fail.is_some() {
            break;
        }
        let end = prev.expect("nonempty sequence");
        let reached = |a: usize| {
            let (v, l) = (end.get(a), limit.get(a));
            if l.is_pos_inf() {
                v.is_pos_inf() || v.get() >= S::lit(BIG)
            } else {
                ext_close(v, l, S::lit(1e-6))
            }
        };
        if let Some(a) = (0..n_atoms).find(|&a| !reached(a)) {
            cont_fail = Some((
                a,
                format!("{label}: limit value {} vs beta(X) = {}", end.get(a), limit.get(a)),
                vec![var("X", &target)],
            ));
            break;
        }
    }
    findings.push(cont_fail);

    // locality and pasting of level sets
    let mut loc_fail: Option<Finding> = None;
    let b = random_event(&mut rng, space, t);
    let xb = x.restrict(&b)?;
    let bxb = eval(&xb)?;
    if let Some(a) = (0..n_atoms).find(|&a| b.contains_atom(a) && !ext_close(bxb.get(a), bx.get(a), tol)) {
        loc_fail = Some((
            a,
            format!("beta(X 1_B) = {} differs from beta(X) = {} on B", bxb.get(a), bx.get(a)),
            vec![var("X", &x)],
        ));
    }
    if loc_fail.is_none() {
        let z = (0..n_atoms)
            .filter(|&a| b.contains_atom(a))
            .map(|a| bx.get(a))
            .chain((0..n_atoms).filter(|&a| !b.contains_atom(a)).map(|a| by.get(a)))
            .min()
            .unwrap_or(zd);
        let p = paste(&x, &y, &b)?;
        let bp = eval(&p)?;
        if let Some(a) = (0..n_atoms).find(|&a| !ext_ge(bp.get(a), z, tol)) {
            loc_fail = Some((
                a,
                format!("pasted payoff has beta = {} below the common level {z}", bp.get(a)),
                vec![var("X1", &x), var("X2", &y)],
            ));
        }
    }
    findings.push(loc_fail);

    // level sets of stage-t variables are bounded below
    let mut lvl_fail: Option<Finding> = None;
    let z = random_level(&mut rng, zd, zu);
    let zz = ExtReal::of(z);
    for a in 0..n_atoms {
        let pred = |c: S| -> Result<bool> {
            let vals = vec![ExtReal::of(c); space.atoms(t)[a].len()];
            Ok(m.eval_atom(space, t, a, &vals)? >= zz)
        };
        match first_true(pred, BracketOptions::with_tol(S::lit(1e-10)))? {
            Crossing::NegInf => {
                lvl_fail = Some((a, format!("constants down to -2^60 reach level {z}"), vec![]));
                break;
            }
            Crossing::Unreached => {
                lvl_fail = Some((a, format!("level {z} < z_u never reached by constants"), vec![]));
                break;
            }
            Crossing::Bracket { lo, .. } => {
                let xi = random_stage_var(&mut rng, space, t, -20.0, 20.0);
                let bxi = eval(&xi)?;
                let leaf = space.atoms(t)[a].start;
                let v = xi.get(leaf).get();
                if bxi.get(a) >= zz && v < lo - S::lit(1e-9) * S::one().max(lo.abs()) {
                    lvl_fail = Some((
                        a,
                        format!("xi = {v} has beta >= {z} below the bound {lo}"),
                        vec![var("xi", &xi)],
                    ));
                    break;
                }
            }
        }
    }
    findings.push(lvl_fail);

    Ok(Trial { findings, ties })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleReport {
    pub measure: String,
    pub stage: usize,
    pub seed: u64,
    pub trials: usize,
    /// `β_t(cX) = β_t(X)` on every sample.
    pub homogeneous: bool,
    /// `β_t(ξ) = β_t(1) 1_{ξ>0} + β_t(0) 1_{ξ<=0}` on every sample.
    pub stage_structure: bool,
    pub passed: bool,
    pub witness: Option<AxiomWitness>,
}

/// Checks 0-homogeneity `β_t(cX) = β_t(X)` for random `c > 0` (including
/// `c = 7.3`) and the implied structure of `β_t` on stage-`t` variables.
pub fn check_scale_invariance<S, M>(m: &M, space: &Arc<FilteredSpace<S>>, t: usize, trials: usize, seed: u64) -> Result<ScaleReport>
where
    S: Scalar,
    M: PerformanceMeasure<S> + ?Sized,
{
    space.check_stage(t)?;
    let tol = S::lit(TOL);
    let n_atoms = space.num_atoms(t);
    let one = m.evaluate(t, &XVar::constant(space.clone(), S::one()))?;
    let zero = m.evaluate(t, &XVar::constant(space.clone(), S::zero()))?;
    let results = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<(Option<Finding>, Option<Finding>)> {
            let mut rng = trial_rng(seed, i);
            let x = random_xvar(&mut rng, space, -5.0, 5.0, 0.1);
            let c = if i == 0 { 7.3 } else { 10f64.powf(rng.gen_range(-2.0..2.0)) };
            let bx = m.evaluate(t, &x)?;
            let bc = m.evaluate(t, &x.scale(S::lit(c))?)?;
            let hom = (0..n_atoms).find(|&a| !ext_close(bx.get(a), bc.get(a), tol)).map(|a| {
                (
                    a,
                    format!("beta({c} X) = {} but beta(X) = {}", bc.get(a), bx.get(a)),
                    vec![("X".to_string(), nums(x.values()))],
                )
            });
            let xi = if i == 0 {
                XVar::constant(space.clone(), -S::lit(5.0))
            } else {
                random_stage_var(&mut rng, space, t, -5.0, 5.0)
            };
            let bxi = m.evaluate(t, &xi)?;
            let stage = (0..n_atoms)
                .find(|&a| {
                    let v = xi.get(space.atoms(t)[a].start).get();
                    let expect = if v > S::zero() { one.get(a) } else { zero.get(a) };
                    !ext_close(bxi.get(a), expect, tol)
                })
                .map(|a| {
                    (
                        a,
                        format!("beta(xi) = {} on a stage-{t} variable is not beta(1) or beta(0)", bxi.get(a)),
                        vec![("xi".to_string(), nums(xi.values()))],
                    )
                });
            Ok((hom, stage))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut witness = None;
    let (mut homogeneous, mut stage_structure) = (true, true);
    for (i, (h, s)) in results.into_iter().enumerate() {
        homogeneous &= h.is_none();
        stage_structure &= s.is_none();
        if witness.is_none() {
            if let Some((atom, detail, vars)) = h.or(s) {
                witness = Some(AxiomWitness {
                    trial: i as u64,
                    atom,
                    detail,
                    vars,
                });
            }
        }
    }
    Ok(ScaleReport {
        measure: m.name(),
        stage: t,
        seed,
        trials,
        homogeneous,
        stage_structure,
        passed: homogeneous && stage_structure,
        witness,
    })
}
