use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::Num;
use crate::lattice::FilteredSpace;
use crate::measures::{MeasureKind, MeasureSpec, PerformanceMeasure};
use crate::random::trial_rng;
use crate::scalar::Scalar;

use super::DynamicMeasure;

/// Dual-set nesting for the coherent GLR family.
///
/// For a coherent family the penalty `α_t^z(Q)` is `0` on atoms where the
/// conditional law of `Q` lies in the dual set and `+∞` elsewhere, so
/// `E^Q_s[α_t^z(Q)] <= α_s^z(Q)` says: wherever `Q` is feasible at stage `s`
/// it is feasible on every `Q`-charged stage-`t` sub-atom.
#[derive(Debug, Clone, Serialize)]
pub struct PenaltyReport {
    pub z: f64,
    pub s: usize,
    pub t: usize,
    pub seed: u64,
    pub samples: usize,
    pub vertex_samples: usize,
    /// Stage-`s` atoms where `Q` was feasible (premise of the inequality).
    pub premise_hits: usize,
    pub violations: usize,
    pub passed: bool,
    pub witness: Option<Vec<Num>>,
    /// Stage-`s` atoms whose charged sub-atoms were all feasible at `t`.
    pub converse_checked: usize,
    /// Of those, atoms infeasible at `s` (the converse nesting fails).
    pub converse_failures: usize,
    pub converse_witness: Option<Vec<Num>>,
}

/// Density ratios within a block at most `1 + z`; blocks without mass are
/// feasible.
fn block_feasible<S: Scalar>(d: &[S], z: S, tol: S) -> bool {
    let hi = d.iter().copied().fold(S::zero(), S::max);
    if hi == S::zero() {
        return true;
    }
    let lo = d.iter().copied().fold(S::infinity(), S::min);
    hi <= (S::one() + z) * lo + tol * hi
}

/// Density that is `1 + z` on a random nonempty proper subset of each
/// block and `1` elsewhere, blocks being the atoms of stage `u`; block
/// masses are either those of `P` or random.
fn vertex_density<S: Scalar, R: Rng>(rng: &mut R, space: &FilteredSpace<S>, u: usize, z: S, keep_mass: bool) -> Vec<S> {
    let mut d = vec![S::zero(); space.num_leaves()];
    for (a, r) in space.atoms(u).iter().enumerate() {
        let n = r.len();
        let high: Vec<bool> = if n == 1 {
            vec![false]
        } else {
            let mask = rng.gen_range(1..(1u64 << n.min(62)) - 1);
            (0..n).map(|i| (mask >> i) & 1 == 1).collect()
        };
        let raw: Vec<S> = high.iter().map(|&h| if h { S::one() + z } else { S::one() }).collect();
        let cond = space.conditional_probs(u, a);
        let mass: S = raw.iter().zip(&cond).map(|(x, p)| *x * *p).sum();
        let scale = if keep_mass { S::one() } else { S::lit(rng.gen_range(0.2..2.0)) };
        for (i, l) in r.clone().enumerate() {
            d[l] = raw[i] / mass * scale;
        }
    }
    d
}

pub fn check_penalty_inequality_coherent<S: Scalar>(
    d: &DynamicMeasure<MeasureSpec<S>>,
    space: &Arc<FilteredSpace<S>>,
    z: S,
    s: usize,
    t: usize,
    q_samples: usize,
    seed: u64,
) -> Result<PenaltyReport> {
    for u in [s, t] {
        if !matches!(d.at(u).kind, MeasureKind::Glr) {
            return Err(Error::InvalidMeasure(format!(
                "penalty nesting needs the coherent GLR family, got {} at stage {u}",
                d.at(u).name()
            )));
        }
    }
    space.check_stage(t)?;
    if s >= t {
        return Err(Error::InvalidArgument(format!("need s < t, got s={s}, t={t}")));
    }
    if !(z > S::zero() && z.is_finite()) {
        return Err(Error::LevelOutOfRange {
            z: z.as_f64(),
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let tol = S::lit(1e-12);
    let mut rep = PenaltyReport {
        z: z.as_f64(),
        s,
        t,
        seed,
        samples: 0,
        vertex_samples: 0,
        premise_hits: 0,
        violations: 0,
        passed: true,
        witness: None,
        converse_checked: 0,
        converse_failures: 0,
        converse_witness: None,
    };
    let n = space.num_leaves();
    for i in 0..q_samples.max(1) as u64 {
        let mut rng = trial_rng(seed, i);
        let dens: Vec<S> = match i % 4 {
            0 if i == 0 => vec![S::one(); n],
            0 | 1 => {
                rep.vertex_samples += 1;
                let u = if i % 4 == 0 { s } else { t };
                let keep = rng.gen_bool(0.5);
                vertex_density(&mut rng, space, u, z, keep)
            }
            2 => {
                rep.vertex_samples += 1;
                vertex_density(&mut rng, space, t, z, true)
            }
            _ => (0..n)
                .map(|_| if rng.gen_bool(0.1) { S::zero() } else { S::lit(rng.gen_range(0.0..1.0)) })
                .collect(),
        };
        rep.samples += 1;
        let enc = || dens.iter().map(|v| Num(v.as_f64())).collect::<Vec<_>>();
        for (b, r) in space.atoms(s).iter().enumerate() {
            if dens[r.clone()].iter().all(|v| *v == S::zero()) {
                continue;
            }
            let feas_s = block_feasible(&dens[r.clone()], z, tol);
            let subs: Vec<bool> = space
                .sub_atoms(s, b, t)
                .map(|a| block_feasible(&dens[space.atoms(t)[a].clone()], z, tol))
                .collect();
            let all_t = subs.iter().all(|f| *f);
            if feas_s {
                rep.premise_hits += 1;
                if !all_t {
                    rep.violations += 1;
                    rep.witness.get_or_insert_with(enc);
                }
            }
            if all_t {
                rep.converse_checked += 1;
                if !feas_s {
                    rep.converse_failures += 1;
                    rep.converse_witness.get_or_insert_with(enc);
                }
            }
        }
    }
    rep.passed = rep.violations == 0;
    Ok(rep)
}
