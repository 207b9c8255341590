//! Dividend processes and the lift of performance measures to them.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{check_time_consistency, search_counterexample, ConsistencyReport, DynamicMeasure, Verdict, TIE_TOL};
use crate::error::{Error, Result};
use crate::io::{nums, Num};
use crate::lattice::{ExtReal, FilteredSpace, TVar, XVar};
use crate::measures::{evaluate, AxiomWitness, PerformanceMeasure};
use crate::random::{random_event, random_xvar, trial_rng};
use crate::scalar::Scalar;

/// An adapted stream of bounded-below payments at finitely many stages.
#[derive(Debug, Clone)]
pub struct DividendProcess<S> {
    space: Arc<FilteredSpace<S>>,
    payments: BTreeMap<usize, TVar<S>>,
}

/// `ξ` seen as a stage-`r` variable, `r >= ξ.stage()`.
pub fn lift_tvar<S: Scalar>(xi: &TVar<S>, r: usize) -> Result<TVar<S>> {
    let space = xi.space();
    space.check_stage(r)?;
    if r < xi.stage() {
        return Err(Error::InvalidArgument(format!(
            "cannot move a stage-{} variable to stage {r}",
            xi.stage()
        )));
    }
    let vals = (0..space.num_atoms(r)).map(|a| xi.get(space.ancestor(r, a, xi.stage()))).collect();
    TVar::new(space.clone(), r, vals)
}

impl<S: Scalar> DividendProcess<S> {
    /// Payments at distinct stages, each bounded below.
    pub fn new(space: Arc<FilteredSpace<S>>, payments: Vec<TVar<S>>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for p in payments {
            if !Arc::ptr_eq(p.space(), &space) && **p.space() != *space {
                return Err(Error::SpaceMismatch);
            }
            if !p.is_bounded_below() {
                return Err(Error::InvalidValue(format!("payment at stage {} takes the value -inf", p.stage())));
            }
            let r = p.stage();
            if map.insert(r, p).is_some() {
                return Err(Error::InvalidArgument(format!("two payments at stage {r}")));
            }
        }
        Ok(Self { space, payments: map })
    }

    pub fn zero(space: Arc<FilteredSpace<S>>) -> Self {
        Self {
            space,
            payments: BTreeMap::new(),
        }
    }

    /// The process paying `X` at the last stage.
    pub fn terminal(x: &XVar<S>) -> Result<Self> {
        let space = x.space().clone();
        let t = space.last_stage();
        let p = TVar::new(space.clone(), t, x.values().to_vec())?;
        Self::new(space, vec![p])
    }

    /// The process paying `ξ` at stage `ξ.stage()` only.
    pub fn single(xi: TVar<S>) -> Result<Self> {
        Self::new(xi.space().clone(), vec![xi])
    }

    pub fn space(&self) -> &Arc<FilteredSpace<S>> {
        &self.space
    }

    pub fn payments(&self) -> &BTreeMap<usize, TVar<S>> {
        &self.payments
    }

    pub fn payment(&self, r: usize) -> Option<&TVar<S>> {
        self.payments.get(&r)
    }

    /// `D + ξ I_{r}`, `r >= ξ.stage()`.
    pub fn add_at(&self, xi: &TVar<S>, r: usize) -> Result<Self> {
        let xi = lift_tvar(xi, r)?;
        let mut out = self.clone();
        let merged = match out.payments.remove(&r) {
            Some(p) => {
                let v = p.values().iter().zip(xi.values()).map(|(a, b)| *a + *b).collect();
                TVar::new(self.space.clone(), r, v)?
            }
            None => xi,
        };
        out.payments.insert(r, merged);
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        other.payments.values().try_fold(self.clone(), |acc, p| acc.add_at(p, p.stage()))
    }

    /// `k D` for `k >= 0`, with `0·∞ = 0`.
    pub fn scale(&self, k: S) -> Result<Self> {
        if !(k >= S::zero() && k.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale factor {k} must be finite and >= 0")));
        }
        let payments = self
            .payments
            .values()
            .map(|p| TVar::new(self.space.clone(), p.stage(), p.values().iter().map(|v| *v * k).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.space.clone(), payments)
    }

    /// `c D + (1 − c) D'`.
    pub fn convex(&self, other: &Self, c: S) -> Result<Self> {
        self.scale(c)?.add(&other.scale(S::one() - c)?)
    }

    /// Payments from stage `t` on.
    pub fn from_stage(&self, t: usize) -> Self {
        Self {
            space: self.space.clone(),
            payments: self.payments.range(t..).map(|(r, p)| (*r, p.clone())).collect(),
        }
    }

    /// `Σ_{r >= t} D_r` at leaf level.
    pub fn aggregate(&self, t: usize) -> Result<XVar<S>> {
        self.space.check_stage(t)?;
        let mut acc = vec![ExtReal::zero(); self.space.num_leaves()];
        for p in self.payments.range(t..).map(|(_, p)| p) {
            for (l, v) in acc.iter_mut().enumerate() {
                *v = *v + p.at_leaf(l);
            }
        }
        XVar::from_ext(self.space.clone(), acc)
    }

    fn encode(&self) -> Vec<(String, Vec<Num>)> {
        self.payments.iter().map(|(r, p)| (format!("D_{r}"), nums(p.values()))).collect()
    }
}

/// `β̂_t(D) = β_t(Σ_{r >= t} D_r)`.
pub fn lift_evaluate<S, M>(m: &M, t: usize, d: &DividendProcess<S>) -> Result<TVar<S>>
where
    S: Scalar,
    M: PerformanceMeasure<S> + ?Sized,
{
    evaluate(m, t, &d.aggregate(t)?)
}

/// Random process with payments at each stage with probability `p_stage`,
/// restricted to stages in `stages`; values in `[-3, 3]`, `+∞` with
/// probability `p_inf`.
pub fn random_process<S: Scalar, R: Rng>(
    rng: &mut R,
    space: &Arc<FilteredSpace<S>>,
    stages: std::ops::RangeInclusive<usize>,
    p_stage: f64,
    p_inf: f64,
) -> DividendProcess<S> {
    let mut payments = Vec::new();
    for r in stages {
        if rng.gen_bool(p_stage) {
            let v = (0..space.num_atoms(r))
                .map(|_| {
                    if rng.gen_bool(p_inf) {
                        ExtReal::pos_inf()
                    } else {
                        ExtReal::of(S::lit(rng.gen_range(-3.0..=3.0)))
                    }
                })
                .collect();
            payments.push(TVar::new(space.clone(), r, v).expect("stage in range"));
        }
    }
    DividendProcess::new(space.clone(), payments).expect("distinct stages")
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftCheck {
    pub name: String,
    /// False for scale invariance of a measure that is not an index.
    pub applicable: bool,
    pub passed: bool,
    pub violations: usize,
    pub witness: Option<AxiomWitness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftReport {
    pub measure: String,
    pub trials: usize,
    pub seed: u64,
    pub checks: Vec<LiftCheck>,
}

impl LiftReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&LiftCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const LIFT_PROPERTIES: [&str; 9] = [
    "past_independence_locality",
    "bounds",
    "monotonicity",
    "strict_shift",
    "quasi_concavity",
    "translation_invariance",
    "scale_invariance",
    "terminal_aggregation",
    "round_trip",
];

const TOL: f64 = 1e-9;

fn close<S: Scalar>(a: ExtReal<S>, b: ExtReal<S>) -> bool {
    a.abs_eq(b, S::lit(TOL) * S::one().max(if b.is_finite() { b.get().abs() } else { S::one() }))
}

type Finding = Option<(usize, String, Vec<(String, Vec<Num>)>)>;

/// Property tests of the lifted measure `β̂_t` on random dividend processes
/// at a random stage per trial: the seven listed properties, the identity
/// `β̂_t(D) = β̂_t((Σ_{r>=t} D_r) I_{T})`, and `β̂_t(X I_{T}) = β_t(X)`
/// (bitwise).
pub fn check_lift_axioms<S, M>(m: &M, space: &Arc<FilteredSpace<S>>, trials: usize, seed: u64) -> Result<LiftReport>
where
    S: Scalar,
    M: PerformanceMeasure<S> + ?Sized,
{
    let (zd, zu) = m.bounds();
    let last = space.last_stage();
    let scale_inv = m.is_scale_invariant();
    let per_trial = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<Finding>> {
            let mut rng = trial_rng(seed, i);
            let t = rng.gen_range(0..=last);
            let n = space.num_atoms(t);
            let lift = |d: &DividendProcess<S>| lift_evaluate(m, t, d);
            let d = random_process(&mut rng, space, 0..=last, 0.7, 0.05);
            let bd = lift(&d)?;
            let mut out: Vec<Finding> = Vec::with_capacity(LIFT_PROPERTIES.len());

            // 1: agree on B from t on, anything before t or off B
            let b = random_event(&mut rng, space, t);
            let other = random_process(&mut rng, space, 0..=last, 0.7, 0.05);
            let mut d2 = other.clone();
            for r in t..=last {
                let mine = d.payment(r).cloned().unwrap_or(TVar::constant(space.clone(), r, ExtReal::zero())?);
                let theirs = other.payment(r).cloned().unwrap_or(TVar::constant(space.clone(), r, ExtReal::zero())?);
                let v = (0..space.num_atoms(r))
                    .map(|a| {
                        if b.contains_atom(space.ancestor(r, a, t)) {
                            mine.get(a)
                        } else {
                            theirs.get(a)
                        }
                    })
                    .collect();
                d2.payments.insert(r, TVar::new(space.clone(), r, v)?);
            }
            let bd2 = lift(&d2)?;
            out.push((0..n).find(|&a| b.contains_atom(a) && !close(bd.get(a), bd2.get(a))).map(|a| {
                (a, format!("lift differs on B: {} vs {}", bd.get(a), bd2.get(a)), [d.encode(), d2.encode()].concat())
            }));

            // 2: values in [z_d, z_u], z_u at +∞, z_d approached by constants
            let r = rng.gen_range(t..=last);
            let mut bnd: Finding = (0..n)
                .find(|&a| bd.get(a) < zd || bd.get(a) > zu)
                .map(|a| (a, format!("value {} outside [{zd}, {zu}]", bd.get(a)), d.encode()));
            if bnd.is_none() {
                let top = lift(&DividendProcess::single(TVar::constant(space.clone(), r, ExtReal::pos_inf())?)?)?;
                bnd = (0..n)
                    .find(|&a| top.get(a) != zu)
                    .map(|a| (a, format!("+inf paid at {r} gives {} != z_u", top.get(a)), vec![]));
            }
            if bnd.is_none() {
                let mut prev = ExtReal::pos_inf();
                for k in 0..12 {
                    let c = ExtReal::of(-S::lit(10f64.powi(k)));
                    let v = lift(&DividendProcess::single(TVar::constant(space.clone(), r, c)?)?)?;
                    if let Some(a) = (0..n).find(|&a| v.get(a) > prev) {
                        bnd = Some((a, format!("constant {c} paid at {r} raises the value"), vec![]));
                        break;
                    }
                    prev = v.get(0);
                }
                let floor = ExtReal::of(-S::max_value().sqrt());
                let low = lift(&DividendProcess::single(TVar::constant(space.clone(), r, floor)?)?)?;
                let reached = |v: ExtReal<S>| {
                    if zd.is_finite() {
                        (v - zd).get().abs() <= S::lit(1e-6)
                    } else {
                        v <= ExtReal::of(S::lit(-1e6))
                    }
                };
                if bnd.is_none() {
                    bnd = (0..n)
                        .find(|&a| !reached(low.get(a)))
                        .map(|a| (a, format!("large negative payment gives {} not near z_d = {zd}", low.get(a)), vec![]));
                }
            }
            out.push(bnd);

            // 3: larger payments from t on, arbitrary before t
            let mut up = random_process(&mut rng, space, 0..=last, 0.5, 0.0).from_stage(t);
            up = up.scale(S::zero())?.add(&DividendProcess::new(
                space.clone(),
                up.payments
                    .values()
                    .map(|p| TVar::new(space.clone(), p.stage(), p.values().iter().map(|v| ExtReal::of(v.get().abs())).collect()))
                    .collect::<Result<Vec<_>>>()?,
            )?)?;
            let past = random_process(&mut rng, space, 0..=t.saturating_sub(1), if t == 0 { 0.0 } else { 0.7 }, 0.0);
            let bigger = d.from_stage(t).add(&up)?.add(&if t == 0 { DividendProcess::zero(space.clone()) } else { past })?;
            let bb = lift(&bigger)?;
            out.push((0..n).find(|&a| bb.get(a) < bd.get(a) && !close(bb.get(a), bd.get(a))).map(|a| {
                (a, format!("larger payments lower the value: {} < {}", bb.get(a), bd.get(a)), [d.encode(), bigger.encode()].concat())
            }));

            // 4: strict increase for c > 0 paid at r >= t
            let c = S::lit(rng.gen_range(0.01..=2.0));
            let shifted = d.add_at(&TVar::constant(space.clone(), r, ExtReal::of(c))?, r)?;
            let bs = lift(&shifted)?;
            out.push((0..n).find(|&a| bs.get(a) < zu && bs.get(a) > zd && !(bs.get(a) > bd.get(a))).map(|a| {
                (a, format!("paying {c} at {r} gives {} not above {}", bs.get(a), bd.get(a)), d.encode())
            }));

            // 5
            let w = S::lit(rng.gen_range(0.0..=1.0));
            let mix = d.convex(&other, w)?;
            let (bm, bo) = (lift(&mix)?, lift(&other)?);
            out.push((0..n).find_map(|a| {
                let lo = bd.get(a).min(bo.get(a));
                (bm.get(a) < lo && !close(bm.get(a), lo)).then(|| {
                    (a, format!("mixture at {w} gives {} below min {lo}", bm.get(a)), [d.encode(), other.encode()].concat())
                })
            }));

            // 6: moving ξ from t to r
            let xi_vals = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.05) {
                        ExtReal::pos_inf()
                    } else {
                        ExtReal::of(S::lit(rng.gen_range(-3.0..=3.0)))
                    }
                })
                .collect();
            let xi = TVar::new(space.clone(), t, xi_vals)?;
            let (at_t, at_r) = (lift(&d.add_at(&xi, t)?)?, lift(&d.add_at(&xi, r)?)?);
            out.push((0..n).find(|&a| !close(at_t.get(a), at_r.get(a))).map(|a| {
                (a, format!("xi at {t} gives {}, at {r} gives {}", at_t.get(a), at_r.get(a)), d.encode())
            }));

            // 7
            out.push(if scale_inv {
                let k = S::lit(10f64.powf(rng.gen_range(-1.0..=1.0)));
                let bk = lift(&d.scale(k)?)?;
                (0..n).find(|&a| !close(bk.get(a), bd.get(a))).map(|a| {
                    (a, format!("scaling by {k} gives {} vs {}", bk.get(a), bd.get(a)), d.encode())
                })
            } else {
                None
            });

            let term = lift(&DividendProcess::terminal(&d.aggregate(t)?)?)?;
            out.push((0..n).find(|&a| term.get(a) != bd.get(a)).map(|a| {
                (a, format!("terminal aggregate gives {} vs {}", term.get(a), bd.get(a)), d.encode())
            }));

            let x = random_xvar(&mut rng, space, -5.0, 5.0, 0.1);
            let (lx, bx) = (lift(&DividendProcess::terminal(&x)?)?, evaluate(m, t, &x)?);
            out.push((0..n).find(|&a| lx.get(a) != bx.get(a)).map(|a| {
                (a, format!("lift of X I_T gives {} vs {}", lx.get(a), bx.get(a)), vec![("X".into(), nums(x.values()))])
            }));
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut checks: Vec<LiftCheck> = LIFT_PROPERTIES
        .iter()
        .map(|n| LiftCheck {
            name: n.to_string(),
            applicable: *n != "scale_invariance" || scale_inv,
            passed: true,
            violations: 0,
            witness: None,
        })
        .collect();
    for (i, findings) in per_trial.into_iter().enumerate() {
        for (c, f) in checks.iter_mut().zip(findings) {
            if let Some((atom, detail, vars)) = f {
                c.passed = false;
                c.violations += 1;
                c.witness.get_or_insert(AxiomWitness {
                    trial: i as u64,
                    atom,
                    detail,
                    vars,
                });
            }
        }
    }
    Ok(LiftReport {
        measure: m.name(),
        trials,
        seed,
        checks,
    })
}

/// `α_t(D) > z` on every stage-`t` atom of the stage-`s` atom `atom` while
/// `α_s(D) <= z` there.
#[derive(Debug, Clone, Serialize)]
pub struct ProcessWitness {
    pub payments: BTreeMap<usize, Vec<Num>>,
    pub s: usize,
    pub t: usize,
    pub z: f64,
    pub atom: String,
    pub alpha_t: Vec<Num>,
    pub alpha_s: Num,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProcessTally {
    pub checks: usize,
    pub skipped_ties: usize,
    pub violations: usize,
    pub witness: Option<ProcessWitness>,
}

impl ProcessTally {
    fn merge(&mut self, o: ProcessTally) {
        self.checks += o.checks;
        self.skipped_ties += o.skipped_ties;
        self.violations += o.violations;
        if self.witness.is_none() {
            self.witness = o.witness;
        }
    }
}

fn empty_tally() -> ProcessTally {
    ProcessTally {
        checks: 0,
        skipped_ties: 0,
        violations: 0,
        witness: None,
    }
}

/// Localized process-level consistency check of one `(D, s, t, z)`.
fn check_process<S, M>(d: &DynamicMeasure<M>, p: &DividendProcess<S>, s: usize, t: usize, z: S, tally: &mut ProcessTally) -> Result<()>
where
    S: Scalar,
    M: PerformanceMeasure<S>,
{
    let space = p.space();
    let at = lift_evaluate(d.at(t), t, p)?;
    let as_ = lift_evaluate(d.at(s), s, p)?;
    let zz = ExtReal::of(z);
    let tie = |v: ExtReal<S>| v.is_finite() && (v.get() - z).abs() < S::lit(TIE_TOL);
    for b in 0..space.num_atoms(s) {
        let sub = space.sub_atoms(s, b, t);
        if sub.clone().any(|a| tie(at.get(a))) || tie(as_.get(b)) {
            tally.skipped_ties += 1;
            continue;
        }
        tally.checks += 1;
        if sub.clone().all(|a| at.get(a) > zz) && as_.get(b) <= zz {
            tally.violations += 1;
            if tally.witness.is_none() {
                tally.witness = Some(ProcessWitness {
                    payments: p.payments.iter().map(|(r, v)| (*r, nums(v.values()))).collect(),
                    s,
                    t,
                    z: z.as_f64(),
                    atom: space.atom_id(s, b),
                    alpha_t: sub.map(|a| Num::of(at.get(a))).collect(),
                    alpha_s: Num::of(as_.get(b)),
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftConsistencyReport {
    pub measure: String,
    pub trials: usize,
    pub seed: u64,
    pub variable: ConsistencyReport,
    pub variable_search: Option<ConsistencyReport>,
    pub variable_verdict: Verdict,
    /// Processes paying only at dates `>= t` for the pair `(s, t)` checked.
    pub restricted: ProcessTally,
    /// A variable-level witness `X` carried over as `D = X I_{T}`.
    pub transported: Option<ProcessWitness>,
    pub process_verdict: Verdict,
    pub verdicts_agree: bool,
    /// Processes with payments at arbitrary dates.
    pub unrestricted: ProcessTally,
}

/// Compares time consistency of `β` with that of its lift `β̂`.
///
/// The variable level is sampled and, when `search_budget > 0`, searched;
/// a variable witness is transported to `X I_{T}` and re-checked on
/// processes. The process level is sampled on processes paying at dates
/// `>= t` (where the two notions coincide) and, separately, on processes
/// with arbitrary payment dates, where payments in `[s, t)` enter `β̂_s`
/// but not `β̂_t`.
pub fn check_lift_time_consistency<S, M>(
    d: &DynamicMeasure<M>,
    space: &Arc<FilteredSpace<S>>,
    z_grid: &[S],
    trials: usize,
    search_budget: usize,
    seed: u64,
) -> Result<LiftConsistencyReport>
where
    S: Scalar,
    M: PerformanceMeasure<S>,
{
    let variable = check_time_consistency(d, space, z_grid, trials, seed)?;
    let variable_search = if search_budget > 0 {
        Some(search_counterexample(d, space, search_budget, seed)?)
    } else {
        None
    };
    let var_witness = variable
        .witness
        .clone()
        .or_else(|| variable_search.as_ref().and_then(|r| r.witness.clone()));
    let variable_verdict = if var_witness.is_some() {
        Verdict::Counterexample
    } else {
        Verdict::ConsistentOnSample
    };
    let last = space.last_stage();
    let tallies = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<(ProcessTally, ProcessTally)> {
            let mut rng = trial_rng(seed ^ 0x5eed, i);
            let (mut restricted, mut unrestricted) = (empty_tally(), empty_tally());
            let free = random_process(&mut rng, space, 0..=last, 0.7, 0.05);
            for s in 0..last {
                for t in s + 1..=last {
                    let p = random_process(&mut rng, space, t..=last, 0.7, 0.05);
                    for &z in z_grid {
                        check_process(d, &p, s, t, z, &mut restricted)?;
                        check_process(d, &free, s, t, z, &mut unrestricted)?;
                    }
                }
            }
            Ok((restricted, unrestricted))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut restricted, mut unrestricted) = (empty_tally(), empty_tally());
    for (r, u) in tallies {
        restricted.merge(r);
        unrestricted.merge(u);
    }
    let transported = match &var_witness {
        Some(w) => {
            let p = DividendProcess::terminal(&w.xvar(space)?)?;
            let mut tally = empty_tally();
            check_process(d, &p, w.s, w.t, S::lit(w.z), &mut tally)?;
            tally.witness
        }
        None => None,
    };
    let process_verdict = if restricted.violations > 0 || transported.is_some() {
        Verdict::Counterexample
    } else {
        Verdict::ConsistentOnSample
    };
    Ok(LiftConsistencyReport {
        measure: d.name(),
        trials,
        seed,
        variable,
        variable_search,
        variable_verdict,
        restricted,
        transported,
        process_verdict,
        verdicts_agree: variable_verdict == process_verdict,
        unrestricted,
    })
}
