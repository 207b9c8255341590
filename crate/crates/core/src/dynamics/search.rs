use std::cmp::Ordering;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{nums, Num};
use crate::lattice::{ExtReal, FilteredSpace, TVar, XVar};
use crate::measures::PerformanceMeasure;
use crate::random::{random_xvar, trial_rng};
use crate::scalar::Scalar;

use super::{margin, min_ext, ConsistencyReport, ConsistencyWitness, CriterionTally, DynamicMeasure, Verdict, CRITERIA, TIE_TOL};

/// Evaluations spent on each start before moving to the next one.
const PER_START: usize = 200;

/// Witnesses must re-verify with induced risks at this bisection tolerance.
pub const VERIFY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchInfo {
    pub budget: usize,
    pub evaluations: usize,
    pub starts: usize,
    /// Largest margin seen, including candidates rejected on re-verification.
    pub best_margin: f64,
    pub reverified: bool,
}

/// `(score, margin, s, t, atom, z)`.
type Violation<S> = (f64, f64, usize, usize, usize, S);

#[derive(Debug, Clone)]
struct Candidate {
    score: f64,
    margin: f64,
    s: usize,
    t: usize,
    atom: usize,
    z: f64,
    x: Vec<f64>,
}

impl Candidate {
    /// Larger score first, then the lexicographically smallest encoding.
    fn better_than(&self, other: &Candidate) -> bool {
        match self.score.total_cmp(&other.score) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => self.key().cmp(&other.key()) == Ordering::Less,
        }
    }

    fn key(&self) -> (usize, usize, usize, Vec<u64>) {
        (self.s, self.t, self.atom, self.x.iter().map(|v| v.to_bits()).collect())
    }
}

/// Best violation over stage pairs and stage-`s` atoms for given stage
/// values: the level is placed between `b_s` and `m_t = min β_t`, at the
/// midpoint, or one unit above `b_s` when `m_t = +∞`. Violations are
/// ranked by `margin / max(1, |z|)`, so witnesses at huge levels do not win
/// on scale alone.
fn best_violation<S: Scalar>(space: &FilteredSpace<S>, beta: &[TVar<S>], bounds: (ExtReal<S>, ExtReal<S>)) -> Option<Violation<S>> {
    let mut best: Option<Violation<S>> = None;
    for s in space.times() {
        for t in s + 1..=space.last_stage() {
            for b in 0..space.num_atoms(s) {
                let bt: Vec<ExtReal<S>> = space.sub_atoms(s, b, t).map(|a| beta[t].get(a)).collect();
                let mt = min_ext(&bt);
                let bs = beta[s].get(b);
                if !(mt > bs) || mt.is_neg_inf() {
                    continue;
                }
                let z = if mt.is_pos_inf() {
                    if bs.is_finite() {
                        bs.get() + S::one()
                    } else {
                        continue;
                    }
                } else if bs.is_neg_inf() {
                    mt.get() - S::one()
                } else {
                    bs.get() + (mt.get() - bs.get()) * S::half()
                };
                if !(ExtReal::of(z) > bounds.0 && ExtReal::of(z) < bounds.1) {
                    continue;
                }
                let m = margin(mt, bs, z);
                let score = m / z.abs().as_f64().max(1.0);
                if best.as_ref().is_none_or(|c| score > c.0) {
                    best = Some((score, m, s, t, b, z));
                }
            }
        }
    }
    best
}

/// Randomized search with coordinate refinement for payoffs violating
/// time consistency on some stage-`s` atom.
///
/// The budget counts evaluations of all stage values; it is split into
/// starts of 200 evaluations, each seeded by `(seed, start)`. Each start
/// draws a random payoff and then perturbs one leaf at a time, keeping
/// improvements of the margin `min(min_B β_t − z, z − β_s)` relative to
/// `max(1, |z|)`. Margins below `1e-6` are treated as ties. The best
/// candidate over all starts (ties broken by its encoding) must re-verify
/// with induced risks at tolerance `1e-12`.
pub fn search_counterexample<S, M>(
    d: &DynamicMeasure<M>,
    space: &Arc<FilteredSpace<S>>,
    budget: usize,
    seed: u64,
) -> Result<ConsistencyReport>
where
    S: Scalar,
    M: PerformanceMeasure<S>,
{
    d.check_space(space)?;
    let bounds = d.bounds();
    let starts = budget.div_ceil(PER_START);
    let results = (0..starts)
        .into_par_iter()
        .map(|k| -> Result<(usize, Option<Candidate>)> {
            let evals = PER_START.min(budget - k * PER_START);
            if space.last_stage() == 0 {
                return Ok((evals, None));
            }
            let mut rng = trial_rng(seed, k as u64);
            let mut x = random_xvar(&mut rng, space, -5.0, 5.0, 0.0);
            let score = |x: &XVar<S>| -> Result<Option<Violation<S>>> {
                Ok(best_violation(space, &d.evaluate_all(x)?, bounds))
            };
            let mut cur = score(&x)?;
            let mut step = 1.0;
            for _ in 1..evals {
                let leaf = rng.gen_range(0..space.num_leaves());
                let delta = S::lit(rng.gen_range(-step..=step));
                let mut v = x.values().to_vec();
                v[leaf] = v[leaf] + ExtReal::of(delta);
                let y = XVar::from_ext(space.clone(), v)?;
                let cand = score(&y)?;
                let gain = match (&cand, &cur) {
                    (Some(c), Some(o)) => c.0 > o.0,
                    (Some(_), None) => true,
                    _ => false,
                };
                if gain {
                    x = y;
                    cur = cand;
                } else {
                    step = (step * 0.95).max(1e-4);
                }
            }
            let found = cur.filter(|c| c.1 >= TIE_TOL).map(|(score, m, s, t, atom, z)| Candidate {
                score,
                margin: m,
                s,
                t,
                atom,
                z: z.as_f64(),
                x: x.to_f64_vec(),
            });
            Ok((evals, found))
        })
        .collect::<Result<Vec<_>>>()?;

    let evaluations = results.iter().map(|r| r.0).sum();
    let best = results.into_iter().filter_map(|r| r.1).fold(None, |acc: Option<Candidate>, c| match acc {
        Some(a) if !c.better_than(&a) => Some(a),
        _ => Some(c),
    });
    let best_margin = best.as_ref().map_or(0.0, |c| c.margin);
    let mut witness = None;
    let mut reverified = false;
    if let Some(c) = best {
        let x = XVar::new(space.clone(), c.x.iter().map(|v| S::lit(*v)).collect())?;
        let beta = d.evaluate_all(&x)?;
        let bt: Vec<ExtReal<S>> = space.sub_atoms(c.s, c.atom, c.t).map(|a| beta[c.t].get(a)).collect();
        let w = ConsistencyWitness {
            x: c.x.iter().map(|v| Num(*v)).collect(),
            s: c.s,
            t: c.t,
            z: c.z,
            atom: space.atom_id(c.s, c.atom),
            beta_t: nums(&bt),
            beta_s: Num::of(beta[c.s].get(c.atom)),
            margin: c.margin,
        };
        reverified = w.verify(d, space, S::lit(VERIFY_TOL))?;
        if reverified {
            witness = Some(w);
        }
    }
    let found = witness.is_some();
    Ok(ConsistencyReport {
        measure: d.name(),
        verdict: if found {
            Verdict::Counterexample
        } else {
            Verdict::ConsistentOnSample
        },
        trials: starts,
        seed,
        z_grid: witness.iter().map(|w| w.z).collect(),
        samples: evaluations,
        atom_checks: 0,
        skipped_ties: 0,
        criteria: CRITERIA
            .iter()
            .map(|n| CriterionTally {
                name: n.to_string(),
                violations: usize::from(found),
                adjacent_violations: usize::from(witness.as_ref().is_some_and(|w| w.t == w.s + 1)),
            })
            .collect(),
        disagreements: 0,
        criteria_agree: true,
        witness,
        search: Some(SearchInfo {
            budget,
            evaluations,
            starts,
            best_margin,
            reverified,
        }),
    })
}
