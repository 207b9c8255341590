//! Dynamic performance measures and time-consistency checks.

mod penalty;
mod search;

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{nums, Num};
use crate::lattice::{ExtReal, FilteredSpace, TVar, XVar};
use crate::measures::{evaluate, MeasureSpec, PerformanceMeasure, RiskAversion};
use crate::random::{random_xvar, trial_rng};
use crate::risk::induce_risk_tol;
use crate::scalar::Scalar;

pub use penalty::{check_penalty_inequality_coherent, PenaltyReport};
pub use search::{search_counterexample, SearchInfo};

/// Ties closer than this to the level are skipped.
pub const TIE_TOL: f64 = 1e-6;

/// A performance measure applied at every stage, or one measure per stage
/// with shared bounds.
#[derive(Debug, Clone)]
pub struct DynamicMeasure<M> {
    stages: Vec<M>,
}

impl<M> DynamicMeasure<M> {
    pub fn uniform(m: M) -> Self {
        Self { stages: vec![m] }
    }

    pub fn at(&self, t: usize) -> &M {
        if self.stages.len() == 1 {
            &self.stages[0]
        } else {
            &self.stages[t]
        }
    }
}

impl<M> DynamicMeasure<M> {
    /// One measure per stage; the bounds must coincide.
    pub fn per_stage<S: Scalar>(stages: Vec<M>) -> Result<Self>
    where
        M: PerformanceMeasure<S>,
    {
        let Some(first) = stages.first() else {
            return Err(Error::InvalidMeasure("dynamic measure needs at least one stage".into()));
        };
        let b = first.bounds();
        if let Some((t, _)) = stages.iter().enumerate().find(|(_, m)| m.bounds() != b) {
            return Err(Error::InvalidMeasure(format!("stage {t} has bounds differing from stage 0")));
        }
        Ok(Self { stages })
    }

    pub fn bounds<S: Scalar>(&self) -> (ExtReal<S>, ExtReal<S>)
    where
        M: PerformanceMeasure<S>,
    {
        self.stages[0].bounds()
    }

    pub fn name<S: Scalar>(&self) -> String
    where
        M: PerformanceMeasure<S>,
    {
        self.stages[0].name()
    }

    fn check_space<S: Scalar>(&self, space: &FilteredSpace<S>) -> Result<()> {
        if self.stages.len() != 1 && self.stages.len() != space.last_stage() + 1 {
            return Err(Error::InvalidMeasure(format!(
                "{} stage measures for a space with {} stages",
                self.stages.len(),
                space.last_stage() + 1
            )));
        }
        Ok(())
    }

    /// `β_t(X)` for every stage `t`.
    pub fn evaluate_all<S: Scalar>(&self, x: &XVar<S>) -> Result<Vec<TVar<S>>>
    where
        M: PerformanceMeasure<S>,
    {
        self.check_space(x.space())?;
        x.space().times().map(|t| evaluate(self.at(t), t, x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConsistentOnSample,
    Counterexample,
}

/// `β_t(X) > z` on every stage-`t` atom inside the stage-`s` atom `atom`,
/// while `β_s(X) <= z` there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyWitness {
    pub x: Vec<Num>,
    pub s: usize,
    pub t: usize,
    pub z: f64,
    /// Stage-`s` atom id.
    pub atom: String,
    pub beta_t: Vec<Num>,
    pub beta_s: Num,
    /// `min(min β_t − z, z − β_s)`.
    pub margin: f64,
}

impl ConsistencyWitness {
    pub fn xvar<S: Scalar>(&self, space: &Arc<FilteredSpace<S>>) -> Result<XVar<S>> {
        let v = self.x.iter().map(|n| n.to_ext()).collect::<Result<Vec<_>>>()?;
        XVar::from_ext(space.clone(), v)
    }

    /// Re-checks the witness with margin `1e-9` on the measure and with the
    /// induced risks computed at bisection tolerance `tol_c`: `ρ_t^z < 0` on
    /// the stage-`t` atoms and `ρ_s^z > 0` on the stage-`s` atom, so all three
    /// criteria are violated.
    pub fn verify<S, M>(&self, d: &DynamicMeasure<M>, space: &Arc<FilteredSpace<S>>, tol_c: S) -> Result<bool>
    where
        S: Scalar,
        M: PerformanceMeasure<S>,
    {
        let x = self.xvar(space)?;
        let b = space.resolve_atom(self.s, &self.atom)?;
        let z = S::lit(self.z);
        let eps = ExtReal::of(S::lit(1e-9));
        let bt = evaluate(d.at(self.t), self.t, &x)?;
        let bs = evaluate(d.at(self.s), self.s, &x)?;
        let sub = space.sub_atoms(self.s, b, self.t);
        let measure_ok = sub.clone().all(|a| bt.get(a) > ExtReal::of(z) + eps) && bs.get(b) <= ExtReal::of(z) - eps;
        let rt = induce_risk_tol(d.at(self.t), self.t, z, &x, tol_c)?;
        let rs = induce_risk_tol(d.at(self.s), self.s, z, &x, tol_c)?;
        let risk_ok = sub.clone().all(|a| rt.get(a) < ExtReal::zero()) && rs.get(b) > ExtReal::zero();
        Ok(measure_ok && risk_ok)
    }

    /// The global counterexample obtained by pasting `+∞` outside the atom:
    /// `β_t > z` everywhere while `β_s <= z` on the atom.
    pub fn globalize<S: Scalar>(&self, space: &Arc<FilteredSpace<S>>) -> Result<XVar<S>> {
        let x = self.xvar(space)?;
        let b = space.resolve_atom(self.s, &self.atom)?;
        let r = space.atoms(self.s)[b].clone();
        let v = x
            .values()
            .iter()
            .enumerate()
            .map(|(l, &v)| if r.contains(&l) { v } else { ExtReal::pos_inf() })
            .collect();
        XVar::from_ext(space.clone(), v)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionTally {
    pub name: String,
    pub violations: usize,
    /// Violations among consecutive stage pairs.
    pub adjacent_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub measure: String,
    pub verdict: Verdict,
    pub trials: usize,
    pub seed: u64,
    pub z_grid: Vec<f64>,
    /// `(X, s, t, z)` tuples examined.
    pub samples: usize,
    /// `(X, s, t, z, B)` checks on stage-`s` atoms `B`.
    pub atom_checks: usize,
    /// Atom checks skipped because a value was within `1e-6` of a tie.
    pub skipped_ties: usize,
    pub criteria: Vec<CriterionTally>,
    /// Atom checks on which the three criteria disagreed.
    pub disagreements: usize,
    pub criteria_agree: bool,
    pub witness: Option<ConsistencyWitness>,
    pub search: Option<SearchInfo>,
}

pub const CRITERIA: [&str; 3] = ["measure_level", "strict_risk", "weak_risk"];

struct TrialOutcome {
    samples: usize,
    checks: usize,
    skipped: usize,
    violations: [usize; 3],
    adjacent: [usize; 3],
    disagreements: usize,
    witness: Option<ConsistencyWitness>,
}

pub(crate) fn min_ext<S: Scalar>(v: &[ExtReal<S>]) -> ExtReal<S> {
    v.iter().copied().fold(ExtReal::pos_inf(), |a, b| if b < a { b } else { a })
}

/// `min(m_t − z, z − b_s)` as an `f64`.
pub(crate) fn margin<S: Scalar>(mt: ExtReal<S>, bs: ExtReal<S>, z: S) -> f64 {
    let zz = ExtReal::of(z);
    let (a, b) = ((mt - zz).get().as_f64(), (zz - bs).get().as_f64());
    a.min(b)
}

fn near_tie<S: Scalar>(v: ExtReal<S>, c: S) -> bool {
    v.is_finite() && (v.get() - c).abs() < S::lit(TIE_TOL)
}

/// Samples random payoffs and checks, for every stage pair `s < t`, every
/// level of `z_grid` and every stage-`s` atom `B`:
///
/// - `β_t > z` on `B` implies `β_s > z` on `B`,
/// - `ρ_t^z < 0` on `B` implies `ρ_s^z < 0` on `B`,
/// - `ρ_t^z <= 0` on `B` implies `ρ_s^z <= 0` on `B`,
///
/// and that the three verdicts agree. The first counterexample (lowest
/// trial, then stage pair, level and atom) is reported.
pub fn check_time_consistency<S, M>(
    d: &DynamicMeasure<M>,
    space: &Arc<FilteredSpace<S>>,
    z_grid: &[S],
    trials: usize,
    seed: u64,
) -> Result<ConsistencyReport>
where
    S: Scalar,
    M: PerformanceMeasure<S>,
{
    if space.last_stage() == 0 {
        return Err(Error::InvalidArgument("time consistency needs at least two stages".into()));
    }
    if z_grid.is_empty() {
        return Err(Error::InvalidArgument("empty level grid".into()));
    }
    d.check_space(space)?;
    let (zd, zu) = d.bounds();
    for &z in z_grid {
        crate::risk::check_level(z, zd, zu)?;
    }
    let tol_c = S::lit(crate::risk::TOL_C);
    let outcomes = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<TrialOutcome> {
            let mut rng = trial_rng(seed, i);
            let x = random_xvar(&mut rng, space, -5.0, 5.0, 0.05);
            let beta = d.evaluate_all(&x)?;
            let mut o = TrialOutcome {
                samples: 0,
                checks: 0,
                skipped: 0,
                violations: [0; 3],
                adjacent: [0; 3],
                disagreements: 0,
                witness: None,
            };
            for &z in z_grid {
                let rho = space
                    .times()
                    .map(|t| Ok(induce_risk_tol(d.at(t), t, z, &x, tol_c)?.values))
                    .collect::<Result<Vec<_>>>()?;
                for s in space.times() {
                    for t in s + 1..=space.last_stage() {
                        o.samples += 1;
                        for b in 0..space.num_atoms(s) {
                            let sub = space.sub_atoms(s, b, t);
                            let tie = sub.clone().any(|a| near_tie(beta[t].get(a), z) || near_tie(rho[t].get(a), S::zero()))
                                || near_tie(beta[s].get(b), z)
                                || near_tie(rho[s].get(b), S::zero());
                            if tie {
                                o.skipped += 1;
                                continue;
                            }
                            o.checks += 1;
                            let zz = ExtReal::of(z);
                            let zero = ExtReal::zero();
                            let v = [
                                sub.clone().all(|a| beta[t].get(a) > zz) && !(beta[s].get(b) > zz),
                                sub.clone().all(|a| rho[t].get(a) < zero) && !(rho[s].get(b) < zero),
                                sub.clone().all(|a| rho[t].get(a) <= zero) && !(rho[s].get(b) <= zero),
                            ];
                            for k in 0..3 {
                                if v[k] {
                                    o.violations[k] += 1;
                                    if t == s + 1 {
                                        o.adjacent[k] += 1;
                                    }
                                }
                            }
                            if v[0] != v[1] || v[1] != v[2] {
                                o.disagreements += 1;
                            }
                            if v[0] && o.witness.is_none() {
                                let bt: Vec<ExtReal<S>> = sub.clone().map(|a| beta[t].get(a)).collect();
                                let margin = margin(min_ext(&bt), beta[s].get(b), z);
                                o.witness = Some(ConsistencyWitness {
                                    x: nums(x.values()),
                                    s,
                                    t,
                                    z: z.as_f64(),
                                    atom: space.atom_id(s, b),
                                    beta_t: nums(&bt),
                                    beta_s: Num::of(beta[s].get(b)),
                                    margin,
                                });
                            }
                        }
                    }
                }
            }
            Ok(o)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut criteria: Vec<CriterionTally> = CRITERIA
        .iter()
        .map(|n| CriterionTally {
            name: n.to_string(),
            violations: 0,
            adjacent_violations: 0,
        })
        .collect();
    let (mut samples, mut checks, mut skipped, mut disagreements) = (0, 0, 0, 0);
    let mut witness = None;
    for o in outcomes {
        samples += o.samples;
        checks += o.checks;
        skipped += o.skipped;
        disagreements += o.disagreements;
        for k in 0..3 {
            criteria[k].violations += o.violations[k];
            criteria[k].adjacent_violations += o.adjacent[k];
        }
        if witness.is_none() {
            witness = o.witness;
        }
    }
    let inconsistent = criteria.iter().any(|c| c.violations > 0);
    Ok(ConsistencyReport {
        measure: d.name(),
        verdict: if inconsistent {
            Verdict::Counterexample
        } else {
            Verdict::ConsistentOnSample
        },
        trials,
        seed,
        z_grid: z_grid.iter().map(|z| z.as_f64()).collect(),
        samples,
        atom_checks: checks,
        skipped_ties: skipped,
        criteria,
        disagreements,
        criteria_agree: disagreements == 0,
        witness,
        search: None,
    })
}

/// Pathwise monotonicity of a risk-aversion process and the empirical
/// time-consistency verdict of the matching dynamic exponential utility.
#[derive(Debug, Clone, Serialize)]
pub struct RiskAversionReport {
    /// `t ↦ λ_t(ω)` nondecreasing on every path.
    pub nondecreasing: bool,
    /// `t ↦ λ_t(ω)` nonincreasing on every path.
    pub nonincreasing: bool,
    pub constant: bool,
    pub consistency: ConsistencyReport,
    /// Consistent-on-sample exactly when the process is nondecreasing.
    pub matches_nondecreasing: bool,
    /// Consistent-on-sample exactly when the process is nonincreasing.
    pub matches_nonincreasing: bool,
}

pub fn check_riskaversion_monotone_consistency<S: Scalar>(
    lambda: &[Vec<S>],
    space: &Arc<FilteredSpace<S>>,
    z_grid: &[S],
    trials: usize,
    seed: u64,
) -> Result<RiskAversionReport> {
    let ra = RiskAversion::Process(lambda.to_vec());
    ra.validate_for(space)?;
    let m = MeasureSpec::exp_utility_process(lambda.to_vec())?;
    let d = DynamicMeasure::uniform(m);
    let consistency = check_time_consistency(&d, space, z_grid, trials, seed)?;
    let (mut up, mut down, mut flat) = (true, true, true);
    for t in 1..=space.last_stage() {
        for a in 0..space.num_atoms(t) {
            let (prev, cur) = (lambda[t - 1][space.parent(t, a)], lambda[t][a]);
            up &= cur >= prev;
            down &= cur <= prev;
            flat &= cur == prev;
        }
    }
    let ok = consistency.verdict == Verdict::ConsistentOnSample;
    Ok(RiskAversionReport {
        nondecreasing: up,
        nonincreasing: down,
        constant: flat,
        matches_nondecreasing: ok == up,
        matches_nonincreasing: ok == down,
        consistency,
    })
}

/// Largest deviation of `C_s(C_t(X))` from `C_s(X)` over random payoffs.
#[derive(Debug, Clone, Serialize)]
pub struct RecursionReport {
    pub measure: String,
    pub trials: usize,
    pub seed: u64,
    pub max_error: f64,
    pub passed: bool,
    pub tol: f64,
}

/// Checks the recursion `β_s(β_t(X)) = β_s(X)` for `s < t` on random
/// finite payoffs, relative tolerance `tol`.
pub fn check_strong_recursion<S, M>(
    d: &DynamicMeasure<M>,
    space: &Arc<FilteredSpace<S>>,
    trials: usize,
    seed: u64,
    tol: S,
) -> Result<RecursionReport>
where
    S: Scalar,
    M: PerformanceMeasure<S>,
{
    d.check_space(space)?;
    let errs = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<S> {
            let mut rng = trial_rng(seed, i);
            let x = random_xvar(&mut rng, space, -5.0, 5.0, 0.0);
            let t = rng.gen_range(0..=space.last_stage());
            let s = rng.gen_range(0..=t);
            let inner = evaluate(d.at(t), t, &x)?.to_xvar()?;
            let lhs = evaluate(d.at(s), s, &inner)?;
            let rhs = evaluate(d.at(s), s, &x)?;
            Ok((0..space.num_atoms(s))
                .map(|a| {
                    let (l, r) = (lhs.get(a), rhs.get(a));
                    if l.is_finite() && r.is_finite() {
                        (l.get() - r.get()).abs() / S::one().max(r.get().abs())
                    } else if l == r {
                        S::zero()
                    } else {
                        S::infinity()
                    }
                })
                .fold(S::zero(), S::max))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_error = errs.into_iter().fold(S::zero(), S::max);
    Ok(RecursionReport {
        measure: d.name(),
        trials,
        seed,
        max_error: max_error.as_f64(),
        passed: max_error <= tol,
        tol: tol.as_f64(),
    })
}
