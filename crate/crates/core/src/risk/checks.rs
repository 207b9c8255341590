//! Property checks on families of risk measures.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::io::{nums, Num};
use crate::lattice::{ExtReal, FilteredSpace, XVar};
use crate::random::{random_event, random_nonneg, random_stage_var, random_xvar, trial_rng};
use crate::scalar::Scalar;

use super::family::{LimitCheck, StandardFamily};
use super::induce::check_level;

#[derive(Debug, Clone, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub violations: usize,
    pub witness: Option<String>,
    pub witness_vars: Vec<(String, Vec<Num>)>,
}

impl PropertyCheck {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            passed: true,
            violations: 0,
            witness: None,
            witness_vars: Vec::new(),
        }
    }

    fn record(&mut self, f: Option<(String, Vec<(String, Vec<Num>)>)>) {
        if let Some((w, vars)) = f {
            self.passed = false;
            self.violations += 1;
            if self.witness.is_none() {
                self.witness = Some(w);
                self.witness_vars = vars;
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyReport {
    pub family: String,
    pub stage: usize,
    pub trials: usize,
    pub seed: u64,
    pub checks: Vec<PropertyCheck>,
    /// `σ(kX) = kσ(X)` held on every sample (informational).
    pub coherent: bool,
    pub limit: Option<LimitCheck>,
}

impl FamilyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn slack<S: Scalar>(v: ExtReal<S>, acc: S) -> S {
    let base = if v.is_finite() { S::one().max(v.get().abs()) } else { S::one() };
    S::lit(1e-8) * base + acc * S::lit(4.0)
}

fn le<S: Scalar>(a: ExtReal<S>, b: ExtReal<S>, acc: S) -> bool {
    if a.is_finite() && b.is_finite() {
        a.get() <= b.get() + slack(b, acc)
    } else {
        a <= b
    }
}

fn close<S: Scalar>(a: ExtReal<S>, b: ExtReal<S>, acc: S) -> bool {
    le(a, b, acc) && le(b, a, acc)
}

type Finding = Option<(String, Vec<(String, Vec<Num>)>)>;

const NAMES: [&str; 8] = [
    "bounded_on_bounded",
    "convexity",
    "monotonicity",
    "translation_invariance",
    "locality",
    "continuity_from_below",
    "level_monotone_continuous",
    "limit_at_zd",
];

/// Property-based check that `f` is a standard family at stage `t`:
/// convex, monotone, translation invariant, local and continuous from below
/// risks, nondecreasing and continuous in the level along `z_grid`, and
/// divergence of `esssup σ_t^z(0)` as `z → −∞` when `z_d = −∞`.
pub fn validate_standard_family<S, F>(
    f: &F,
    space: &Arc<FilteredSpace<S>>,
    t: usize,
    trials: usize,
    z_grid: &[S],
    seed: u64,
) -> Result<FamilyReport>
where
    S: Scalar,
    F: StandardFamily<S> + ?Sized,
{
    space.check_stage(t)?;
    let (zd, zu) = f.interval();
    for &z in z_grid {
        check_level(z, zd, zu)?;
    }
    let acc = f.accuracy();
    let n_atoms = space.num_atoms(t);
    let results = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<(Vec<Finding>, bool)> {
            let mut rng = trial_rng(seed, i);
            let z = z_grid[rng.gen_range(0..z_grid.len())];
            let risk = |x: &XVar<S>| f.risk(z, t, x);
            let var = |n: &str, x: &XVar<S>| (n.to_string(), nums(x.values()));
            let x = random_xvar(&mut rng, space, -5.0, 5.0, 0.0);
            let y = random_xvar(&mut rng, space, -5.0, 5.0, 0.0);
            let rx = risk(&x)?;
            let ry = risk(&y)?;
            let mut out: Vec<Finding> = Vec::with_capacity(NAMES.len());

            out.push((0..n_atoms).find(|&a| !rx.get(a).is_finite()).map(|a| {
                (format!("z={z}: sigma(X) = {} on atom {a} for bounded X", rx.get(a)), vec![var("X", &x)])
            }));

            let c = S::lit(rng.gen_range(0.0..=1.0));
            let rm = risk(&x.convex(&y, c)?)?;
            out.push((0..n_atoms).find_map(|a| {
                let rhs = rx.get(a) * c + ry.get(a) * (S::one() - c);
                (!le(rm.get(a), rhs, acc)).then(|| {
                    (
                        format!("z={z}, c={c}: sigma(mix) = {} > {rhs} on atom {a}", rm.get(a)),
                        vec![var("X", &x), var("Y", &y)],
                    )
                })
            }));

            let d = random_nonneg(&mut rng, space, 3.0);
            let rd = risk(&x.add(&d)?)?;
            out.push((0..n_atoms).find_map(|a| {
                (!le(rd.get(a), rx.get(a), acc)).then(|| {
                    (
                        format!("z={z}: sigma(X+D) = {} > sigma(X) = {} on atom {a}", rd.get(a), rx.get(a)),
                        vec![var("X", &x), var("D", &d)],
                    )
                })
            }));

            let xi = random_stage_var(&mut rng, space, t, -3.0, 3.0);
            let rxi = risk(&x.add(&xi)?)?;
            out.push((0..n_atoms).find_map(|a| {
                let shift = xi.get(space.atoms(t)[a].start);
                let expect = rx.get(a) - shift;
                (!close(rxi.get(a), expect, acc)).then(|| {
                    (
                        format!("z={z}: sigma(X+xi) = {} but sigma(X) - xi = {expect} on atom {a}", rxi.get(a)),
                        vec![var("X", &x), var("xi", &xi)],
                    )
                })
            }));

            let b = random_event(&mut rng, space, t);
            let rb = risk(&x.restrict(&b)?)?;
            out.push((0..n_atoms).find_map(|a| {
                (b.contains_atom(a) && !close(rb.get(a), rx.get(a), acc)).then(|| {
                    (
                        format!("z={z}: sigma(X 1_B) = {} differs from sigma(X) = {} on B", rb.get(a), rx.get(a)),
                        vec![var("X", &x)],
                    )
                })
            }));

            // X - 10^-k and truncations of a payoff with infinite leaves
            let mut cont: Finding = None;
            let w = random_xvar(&mut rng, space, -5.0, 5.0, 0.3);
            let rw = risk(&w)?;
            let seqs: [(&str, &XVar<S>, &crate::lattice::TVar<S>, Vec<XVar<S>>); 2] = [
                ("X - 10^-k", &x, &rx, (1..=12).map(|k| x.shift(-S::lit(10f64.powi(-k)))).collect()),
                (
                    "X ^ n",
                    &w,
                    &rw,
                    (1..=12)
                        .map(|k| S::lit(10f64.powi(k)))
                        .chain(std::iter::once(S::max_value().sqrt()))
                        .map(|n| w.truncate(n))
                        .collect(),
                ),
            ];
            'seq: for (label, target, limit, seq) in seqs.iter() {
                let mut prev: Option<crate::lattice::TVar<S>> = None;
                for xn in seq {
                    let v = risk(xn)?;
                    if let Some(p) = &prev {
                        if let Some(a) = (0..n_atoms).find(|&a| !le(v.get(a), p.get(a), acc)) {
                            cont = Some((
                                format!("z={z}, {label}: risk increases along the sequence on atom {a}"),
                                vec![var("X", target)],
                            ));
                            break 'seq;
                        }
                    }
                    prev = Some(v);
                }
                let end = prev.expect("nonempty");
                if let Some(a) = (0..n_atoms).find(|&a| {
                    let (e, l) = (end.get(a), limit.get(a));
                    if l.is_neg_inf() {
                        !(e.is_neg_inf() || e.get() <= S::lit(-1e6))
                    } else {
                        !close(e, l, acc.max(S::lit(1e-6)))
                    }
                }) {
                    cont = Some((
                        format!("z={z}, {label}: limit {} vs sigma(X) = {} on atom {a}", end.get(a), limit.get(a)),
                        vec![var("X", target)],
                    ));
                    break;
                }
            }
            out.push(cont);

            // nondecreasing in the level along the grid
            let mut lvl: Finding = None;
            let mut prev: Option<crate::lattice::TVar<S>> = None;
            for &zg in z_grid {
                let v = f.risk(zg, t, &x)?;
                if let Some(p) = &prev {
                    if let Some(a) = (0..n_atoms).find(|&a| !le(p.get(a), v.get(a), acc)) {
                        lvl = Some((
                            format!("sigma decreases in z at z={zg} on atom {a}: {} -> {}", p.get(a), v.get(a)),
                            vec![var("X", &x)],
                        ));
                        break;
                    }
                }
                prev = Some(v);
            }
            out.push(lvl);

            let k = S::lit(10f64.powf(rng.gen_range(-1.0..1.0)));
            let rk = risk(&x.scale(k)?)?;
            let coherent = (0..n_atoms).all(|a| close(rk.get(a), rx.get(a) * k, acc * k.max(S::one())));
            Ok((out, coherent))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut checks: Vec<PropertyCheck> = NAMES.iter().map(|n| PropertyCheck::new(n)).collect();
    let mut coherent = true;
    for (findings, coh) in results {
        coherent &= coh;
        for (c, fnd) in checks.iter_mut().zip(findings) {
            c.record(fnd);
        }
    }
    let limit = f.limit_at_zero(space, t, S::lit(1e6))?;
    if let Some(l) = &limit {
        if !l.reached {
            checks[7].record(Some((
                format!("esssup sigma(0) = {} at the last level tried", l.esssup),
                vec![],
            )));
        }
    }
    Ok(FamilyReport {
        family: f.name(),
        stage: t,
        trials,
        seed,
        checks,
        coherent,
        limit,
    })
}

/// `ρ(X ∧ n)` along a grid of truncation levels.
#[derive(Debug, Clone, Serialize)]
pub struct TruncationReport {
    pub stage: usize,
    pub z: f64,
    pub levels: Vec<f64>,
    pub values: Vec<Vec<Num>>,
    pub limit: Vec<Num>,
    pub nonincreasing: bool,
    pub converged: bool,
}

/// Checks that `ρ_t^z(X ∧ n)` is nonincreasing in `n` and approaches
/// `ρ_t^z(X)` within `1e-6` (below `−10^6` when the limit is `−∞`).
pub fn truncation_limit_check<S, F>(f: &F, t: usize, z: S, x: &XVar<S>, n_grid: &[S]) -> Result<TruncationReport>
where
    S: Scalar,
    F: StandardFamily<S> + ?Sized,
{
    let acc = f.accuracy();
    let limit = f.risk(z, t, x)?;
    let vals = n_grid
        .iter()
        .map(|&n| f.risk(z, t, &x.truncate(n)))
        .collect::<Result<Vec<_>>>()?;
    let n_atoms = x.space().num_atoms(t);
    let nonincreasing = vals
        .windows(2)
        .all(|w| (0..n_atoms).all(|a| le(w[1].get(a), w[0].get(a), acc)));
    let converged = vals.last().is_some_and(|end| {
        (0..n_atoms).all(|a| {
            let (e, l) = (end.get(a), limit.get(a));
            if l.is_neg_inf() {
                e.is_neg_inf() || e.get() <= S::lit(-1e6)
            } else {
                close(e, l, acc.max(S::lit(1e-6)))
            }
        })
    });
    Ok(TruncationReport {
        stage: t,
        z: z.as_f64(),
        levels: n_grid.iter().map(|n| n.as_f64()).collect(),
        values: vals.iter().map(|v| nums(v.values())).collect(),
        limit: nums(limit.values()),
        nonincreasing,
        converged,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosureReport {
    pub stage: usize,
    pub z: f64,
    pub trials: usize,
    pub seed: u64,
    pub passed: bool,
    pub violations: usize,
    pub witness: Option<String>,
}

/// For random `Y` moved onto the boundary `ρ(Y) = 0`, checks that
/// `ρ(Y + 1/n) < 0` for every `n` and that the limit `Y` of this sequence
/// in `{ρ < 0}` satisfies `ρ(Y) <= 1e-9`.
pub fn closure_check<S, F>(f: &F, space: &Arc<FilteredSpace<S>>, t: usize, z: S, trials: usize, seed: u64) -> Result<ClosureReport>
where
    S: Scalar,
    F: StandardFamily<S> + ?Sized,
{
    let acc = f.accuracy();
    let n_atoms = space.num_atoms(t);
    let found = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<Option<String>> {
            let mut rng = trial_rng(seed, i);
            let y = random_xvar(&mut rng, space, -5.0, 5.0, 0.0);
            let r = f.risk(z, t, &y)?;
            if r.values().iter().any(|v| !v.is_finite()) {
                return Ok(None);
            }
            let y0 = y.add_tvar(&r)?;
            for n in 1..=20 {
                let step = S::one() / S::lit(n as f64);
                let rn = f.risk(z, t, &y0.shift(step))?;
                if let Some(a) = (0..n_atoms).find(|&a| !(rn.get(a) < ExtReal::zero())) {
                    return Ok(Some(format!("trial {i}: rho(Y + 1/{n}) = {} on atom {a}", rn.get(a))));
                }
            }
            let r0 = f.risk(z, t, &y0)?;
            let bound = S::lit(1e-9) + acc * S::lit(4.0);
            Ok((0..n_atoms)
                .find(|&a| !(r0.get(a) <= ExtReal::of(bound)))
                .map(|a| format!("trial {i}: limit has rho = {} on atom {a}", r0.get(a))))
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = found.iter().filter(|f| f.is_some()).count();
    Ok(ClosureReport {
        stage: t,
        z: z.as_f64(),
        trials,
        seed,
        passed: violations == 0,
        violations,
        witness: found.into_iter().flatten().next(),
    })
}
