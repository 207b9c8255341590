use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{nums, Num};
use crate::lattice::{cond_expect_q, ExtReal, FilteredSpace, TVar, XVar};
use crate::measures::PerformanceMeasure;
use crate::scalar::Scalar;

use super::induce::{induce_risk, RiskPoint};
use super::simplex::LinearProgram;

/// A test measure given by its density with respect to `P`, agreeing with
/// `P` on `F_t`.
#[derive(Debug, Clone)]
pub struct DualMeasure<S> {
    pub stage: usize,
    /// `dQ/dP` per leaf.
    pub density: Vec<S>,
}

impl<S: Scalar> DualMeasure<S> {
    /// Checks nonnegativity and unit conditional mass on every stage-`t`
    /// atom, within `1e-10`.
    pub fn validate(&self, space: &FilteredSpace<S>) -> Result<()> {
        space.check_stage(self.stage)?;
        if self.density.len() != space.num_leaves() {
            return Err(Error::DimensionMismatch {
                expected: space.num_leaves(),
                got: self.density.len(),
            });
        }
        if self.density.iter().any(|d| !(d.is_finite() && *d >= S::zero())) {
            return Err(Error::InvalidArgument("density must be nonnegative".into()));
        }
        for (a, r) in space.atoms(self.stage).iter().enumerate() {
            let mass: S = r.clone().map(|l| space.probs()[l] * self.density[l]).sum();
            let pa = space.atom_prob(self.stage, a);
            if (mass / pa - S::one()).abs() > S::lit(1e-10) {
                return Err(Error::InvalidArgument(format!(
                    "density has conditional mass {} on atom {}",
                    mass / pa,
                    space.atom_id(self.stage, a)
                )));
            }
        }
        Ok(())
    }

    /// Per-leaf probabilities of `Q`.
    pub fn weights(&self, space: &FilteredSpace<S>) -> Vec<S> {
        space.probs().iter().zip(&self.density).map(|(p, d)| *p * *d).collect()
    }
}

impl<S: Scalar> Serialize for DualMeasure<S> {
    fn serialize<Se: serde::Serializer>(&self, s: Se) -> std::result::Result<Se::Ok, Se::Error> {
        #[derive(Serialize)]
        struct J {
            stage: usize,
            density: Vec<Num>,
        }
        J {
            stage: self.stage,
            density: self.density.iter().map(|d| Num(d.as_f64())).collect(),
        }
        .serialize(s)
    }
}

/// Rows `q_i p_j − (1 + z) q_j p_i <= 0` for all ordered leaf pairs of an
/// atom with conditional probabilities `cond_p`.
fn ratio_rows<S: Scalar>(cond_p: &[S], z: S) -> Vec<Vec<S>> {
    let n = cond_p.len();
    let k = S::one() + z;
    let mut rows = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mut row = vec![S::zero(); n];
                row[i] = cond_p[j];
                row[j] = -k * cond_p[i];
                rows.push(row);
            }
        }
    }
    rows
}

/// Whether `Q` lies in the dual set of the level-`z` GLR risk at stage `t`:
/// density ratios within every stage-`t` atom at most `1 + z`, with slack
/// `tol` relative to the largest density.
pub fn glr_dual_feasible<S: Scalar>(space: &FilteredSpace<S>, t: usize, z: S, density: &[S], tol: S) -> Result<bool> {
    space.check_stage(t)?;
    if density.len() != space.num_leaves() {
        return Err(Error::DimensionMismatch {
            expected: space.num_leaves(),
            got: density.len(),
        });
    }
    let k = S::one() + z;
    for r in space.atoms(t) {
        let d = &density[r.clone()];
        let hi = d.iter().copied().fold(S::zero(), S::max);
        let lo = d.iter().copied().fold(S::infinity(), S::min);
        if hi > k * lo + tol * hi.max(S::one()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// GLR risk through its dual: per atom, `max E^Q[−X]` over conditional
/// densities with pairwise ratios at most `1 + z`.
#[derive(Debug, Clone)]
pub struct DualRisk<S> {
    pub risk: RiskPoint<S>,
    /// An optimal `Q`, agreeing with `P` on `F_t`.
    pub optimal: DualMeasure<S>,
}

pub fn glr_dual_risk<S: Scalar>(t: usize, z: S, x: &XVar<S>) -> Result<DualRisk<S>> {
    if !(z > S::zero() && z.is_finite()) {
        return Err(Error::LevelOutOfRange {
            z: z.as_f64(),
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    if !x.is_finite() {
        return Err(Error::InvalidArgument("dual risk needs a finite payoff".into()));
    }
    let space = x.space();
    space.check_stage(t)?;
    let mut values = Vec::with_capacity(space.num_atoms(t));
    let mut density = vec![S::zero(); space.num_leaves()];
    for (a, r) in space.atoms(t).iter().enumerate() {
        let cond = space.conditional_probs(t, a);
        let n = cond.len();
        let lp = LinearProgram {
            c: x.on_atom(t, a).iter().map(|v| -v.get()).collect(),
            a_le: ratio_rows(&cond, z),
            b_le: vec![S::zero(); n * (n - 1)],
            a_eq: vec![vec![S::one(); n]],
            b_eq: vec![S::one()],
        };
        let sol = lp.solve()?;
        values.push(ExtReal::of(sol.value));
        for (i, l) in r.clone().enumerate() {
            density[l] = sol.x[i] / cond[i];
        }
    }
    Ok(DualRisk {
        risk: RiskPoint {
            z,
            values: TVar::bounded_above(space.clone(), t, values)?,
        },
        optimal: DualMeasure { stage: t, density },
    })
}

/// Lower bound `α̂_t(Q) = max_k (E^Q_t[−Z_k] − ρ_t^z(Z_k))` of the penalty
/// over a probe set of bounded payoffs.
#[derive(Debug, Clone, Serialize)]
pub struct PenaltyProbe {
    pub stage: usize,
    pub z: f64,
    pub lower_bound: Vec<Num>,
    /// Index of the maximizing probe per atom.
    pub argmax: Vec<usize>,
}

pub fn penalty_lower_bound<S, M>(m: &M, t: usize, z: S, q: &DualMeasure<S>, probes: &[XVar<S>]) -> Result<PenaltyProbe>
where
    S: Scalar,
    M: PerformanceMeasure<S> + ?Sized,
{
    let first = probes
        .first()
        .ok_or_else(|| Error::InvalidArgument("penalty probe needs at least one variable".into()))?;
    let space = first.space();
    q.validate(space)?;
    if q.stage != t {
        return Err(Error::InvalidArgument(format!("Q agrees with P up to stage {}, not {t}", q.stage)));
    }
    let w = q.weights(space);
    let n_atoms = space.num_atoms(t);
    let mut best = vec![ExtReal::neg_inf(); n_atoms];
    let mut argmax = vec![0; n_atoms];
    for (k, zk) in probes.iter().enumerate() {
        let neg = zk.map(|v| -v)?;
        let eq = cond_expect_q(&neg, t, &w, true)?;
        let rho: RiskPoint<S> = induce_risk(m, t, z, zk)?;
        for a in 0..n_atoms {
            let v = eq.get(a) - rho.get(a);
            if v > best[a] {
                best[a] = v;
                argmax[a] = k;
            }
        }
    }
    Ok(PenaltyProbe {
        stage: t,
        z: z.as_f64(),
        lower_bound: nums(&best),
        argmax,
    })
}
