use std::sync::Arc;

use super::ext_real::ExtReal;
use super::space::FilteredSpace;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Terminal random variable: one value per leaf, bounded from below,
/// possibly `+∞` on some leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct XVar<S> {
    space: Arc<FilteredSpace<S>>,
    values: Vec<ExtReal<S>>,
}

/// Stage-`t` measurable variable: one value per atom of the stage.
///
/// Holds both range variants: bounded from below with `+∞` allowed (the
/// range of performance measures) and bounded from above with `−∞` allowed
/// (the range of risk measures). [`TVar::is_bounded_below`] and
/// [`TVar::is_bounded_above`] tell them apart.
#[derive(Debug, Clone, PartialEq)]
pub struct TVar<S> {
    space: Arc<FilteredSpace<S>>,
    stage: usize,
    values: Vec<ExtReal<S>>,
}

/// An event of `F_t`, given as a subset of the stage-`t` atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventMask {
    stage: usize,
    atoms: Vec<bool>,
}

pub(crate) fn same_space<S: Scalar>(a: &Arc<FilteredSpace<S>>, b: &Arc<FilteredSpace<S>>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl<S: Scalar> XVar<S> {
    /// Builds a variable from per-leaf values in the space's leaf order.
    pub fn new(space: Arc<FilteredSpace<S>>, values: Vec<S>) -> Result<Self> {
        let values = values
            .into_iter()
            .map(ExtReal::new)
            .collect::<Result<Vec<_>>>()?;
        Self::from_ext(space, values)
    }

    pub fn from_ext(space: Arc<FilteredSpace<S>>, values: Vec<ExtReal<S>>) -> Result<Self> {
        if values.len() != space.num_leaves() {
            return Err(Error::DimensionMismatch {
                expected: space.num_leaves(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| v.is_neg_inf()) {
            return Err(Error::InvalidValue(format!(
                "leaf {:?} is -inf; terminal variables must be bounded from below",
                space.leaf_ids()[i]
            )));
        }
        Ok(Self { space, values })
    }

    pub fn constant(space: Arc<FilteredSpace<S>>, c: S) -> Self {
        let n = space.num_leaves();
        Self::from_ext(space, vec![ExtReal::of(c); n]).expect("finite or +inf constant")
    }

    pub fn pos_inf(space: Arc<FilteredSpace<S>>) -> Self {
        let n = space.num_leaves();
        Self {
            space,
            values: vec![ExtReal::pos_inf(); n],
        }
    }

    #[inline]
    pub fn space(&self) -> &Arc<FilteredSpace<S>> {
        &self.space
    }

    #[inline]
    pub fn values(&self) -> &[ExtReal<S>] {
        &self.values
    }

    #[inline]
    pub fn get(&self, leaf: usize) -> ExtReal<S> {
        self.values[leaf]
    }

    /// Values on the leaves of stage-`t` atom `a`.
    #[inline]
    pub fn on_atom(&self, t: usize, a: usize) -> &[ExtReal<S>] {
        &self.values[self.space.atoms(t)[a].clone()]
    }

    /// Smallest leaf value (finite, since `−∞` is excluded).
    pub fn min_value(&self) -> ExtReal<S> {
        self.values.iter().copied().min().expect("nonempty")
    }

    pub fn max_value(&self) -> ExtReal<S> {
        self.values.iter().copied().max().expect("nonempty")
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if same_space(&self.space, &other.space) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    /// Leafwise map; the result must stay bounded from below.
    pub fn map(&self, f: impl Fn(ExtReal<S>) -> ExtReal<S>) -> Result<Self> {
        Self::from_ext(self.space.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(ExtReal<S>, ExtReal<S>) -> ExtReal<S>) -> Result<Self> {
        self.check_same(other)?;
        Self::from_ext(
            self.space.clone(),
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// `X + c` for a real constant.
    pub fn shift(&self, c: S) -> Self {
        self.map(|v| v + c).expect("shift of bounded-below variable")
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    /// `X + ξ` for a stage-`t` variable `ξ` without `−∞` values.
    pub fn add_tvar(&self, xi: &TVar<S>) -> Result<Self> {
        self.add(&xi.to_xvar()?)
    }

    /// `k·X` for `k >= 0`.
    pub fn scale(&self, k: S) -> Result<Self> {
        if k < S::zero() {
            return Err(Error::InvalidArgument(format!("negative scale {k}")));
        }
        self.map(|v| v * k)
    }

    /// Convex combination `c·X + (1−c)·Y`, `c ∈ [0,1]`.
    pub fn convex(&self, other: &Self, c: S) -> Result<Self> {
        if !(c >= S::zero() && c <= S::one()) {
            return Err(Error::InvalidArgument(format!("weight {c} not in [0,1]")));
        }
        self.zip_with(other, |a, b| a * c + b * (S::one() - c))
    }

    /// Truncation `X ∧ n`.
    pub fn truncate(&self, n: S) -> Self {
        self.map(|v| v.min(ExtReal::of(n))).expect("truncation is bounded below")
    }

    /// `X · 1_B` with the convention `0·∞ = 0`.
    pub fn restrict(&self, b: &EventMask) -> Result<Self> {
        b.check(&self.space)?;
        let t = b.stage;
        let vals = (0..self.values.len())
            .map(|l| {
                if b.atoms[self.space.atom_of(t, l)] {
                    self.values[l]
                } else {
                    ExtReal::zero()
                }
            })
            .collect();
        Self::from_ext(self.space.clone(), vals)
    }

    /// Leafwise `X <= Y`.
    pub fn le(&self, other: &Self) -> Result<bool> {
        self.check_same(other)?;
        Ok(self.values.iter().zip(&other.values).all(|(a, b)| a <= b))
    }

    /// Values as `f64` (`inf` kept as infinity).
    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.get().as_f64()).collect()
    }
}

impl<S: Scalar> TVar<S> {
    /// Builds a stage-`t` variable from per-atom values. Any extended real
    /// is accepted; use the range checks when a variant is required.
    pub fn new(space: Arc<FilteredSpace<S>>, stage: usize, values: Vec<ExtReal<S>>) -> Result<Self> {
        space.check_stage(stage)?;
        if values.len() != space.num_atoms(stage) {
            return Err(Error::DimensionMismatch {
                expected: space.num_atoms(stage),
                got: values.len(),
            });
        }
        Ok(Self { space, stage, values })
    }

    /// Builds a bounded-below stage variable (`−∞` rejected).
    pub fn bounded_below(space: Arc<FilteredSpace<S>>, stage: usize, values: Vec<ExtReal<S>>) -> Result<Self> {
        let v = Self::new(space, stage, values)?;
        if !v.is_bounded_below() {
            return Err(Error::InvalidValue("-inf in a bounded-below stage variable".into()));
        }
        Ok(v)
    }

    /// Builds a bounded-above stage variable (`+∞` rejected).
    pub fn bounded_above(space: Arc<FilteredSpace<S>>, stage: usize, values: Vec<ExtReal<S>>) -> Result<Self> {
        let v = Self::new(space, stage, values)?;
        if !v.is_bounded_above() {
            return Err(Error::InvalidValue("+inf in a bounded-above stage variable".into()));
        }
        Ok(v)
    }

    pub fn constant(space: Arc<FilteredSpace<S>>, stage: usize, c: ExtReal<S>) -> Result<Self> {
        space.check_stage(stage)?;
        let n = space.num_atoms(stage);
        Ok(Self {
            space,
            stage,
            values: vec![c; n],
        })
    }

    #[inline]
    pub fn space(&self) -> &Arc<FilteredSpace<S>> {
        &self.space
    }

    #[inline]
    pub fn stage(&self) -> usize {
        self.stage
    }

    #[inline]
    pub fn values(&self) -> &[ExtReal<S>] {
        &self.values
    }

    #[inline]
    pub fn get(&self, atom: usize) -> ExtReal<S> {
        self.values[atom]
    }

    /// Value on the atom containing `leaf`.
    pub fn at_leaf(&self, leaf: usize) -> ExtReal<S> {
        self.values[self.space.atom_of(self.stage, leaf)]
    }

    pub fn is_bounded_below(&self) -> bool {
        self.values.iter().all(|v| !v.is_neg_inf())
    }

    pub fn is_bounded_above(&self) -> bool {
        self.values.iter().all(|v| !v.is_pos_inf())
    }

    /// Promotes to a terminal variable constant on each atom.
    pub fn to_xvar(&self) -> Result<XVar<S>> {
        let vals = (0..self.space.num_leaves()).map(|l| self.at_leaf(l)).collect();
        XVar::from_ext(self.space.clone(), vals)
    }

    /// Largest atom value.
    pub fn ess_sup(&self) -> ExtReal<S> {
        self.values.iter().copied().max().expect("nonempty")
    }

    pub fn ess_inf(&self) -> ExtReal<S> {
        self.values.iter().copied().min().expect("nonempty")
    }

    /// Atomwise closeness; infinite values must match exactly.
    pub fn approx_eq(&self, other: &Self, tol: S) -> bool {
        self.stage == other.stage
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.abs_eq(*b, tol))
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.get().as_f64()).collect()
    }
}

impl EventMask {
    pub fn new<S: Scalar>(space: &FilteredSpace<S>, stage: usize, atoms: Vec<bool>) -> Result<Self> {
        space.check_stage(stage)?;
        if atoms.len() != space.num_atoms(stage) {
            return Err(Error::DimensionMismatch {
                expected: space.num_atoms(stage),
                got: atoms.len(),
            });
        }
        Ok(Self { stage, atoms })
    }

    pub fn all<S: Scalar>(space: &FilteredSpace<S>, stage: usize) -> Result<Self> {
        Self::new(space, stage, vec![true; space.num_atoms(stage)])
    }

    pub fn none<S: Scalar>(space: &FilteredSpace<S>, stage: usize) -> Result<Self> {
        Self::new(space, stage, vec![false; space.num_atoms(stage)])
    }

    /// The single stage-`stage` atom `a`.
    pub fn atom<S: Scalar>(space: &FilteredSpace<S>, stage: usize, a: usize) -> Result<Self> {
        let mut atoms = vec![false; space.num_atoms(stage)];
        *atoms
            .get_mut(a)
            .ok_or_else(|| Error::InvalidArgument(format!("atom {a} not at stage {stage}")))? = true;
        Self::new(space, stage, atoms)
    }

    #[inline]
    pub fn stage(&self) -> usize {
        self.stage
    }

    #[inline]
    pub fn contains_atom(&self, a: usize) -> bool {
        self.atoms[a]
    }

    pub fn contains_leaf<S: Scalar>(&self, space: &FilteredSpace<S>, leaf: usize) -> bool {
        self.atoms[space.atom_of(self.stage, leaf)]
    }

    pub fn complement(&self) -> Self {
        Self {
            stage: self.stage,
            atoms: self.atoms.iter().map(|b| !b).collect(),
        }
    }

    /// The same event viewed as a subset of stage-`u` atoms, `u >= stage`.
    pub fn lift<S: Scalar>(&self, space: &FilteredSpace<S>, u: usize) -> Result<Self> {
        space.check_stage(u)?;
        if u < self.stage {
            return Err(Error::InvalidArgument(format!(
                "event of stage {} is not measurable at stage {u}",
                self.stage
            )));
        }
        let atoms = (0..space.num_atoms(u))
            .map(|a| self.atoms[space.ancestor(u, a, self.stage)])
            .collect();
        Ok(Self { stage: u, atoms })
    }

    fn check<S: Scalar>(&self, space: &FilteredSpace<S>) -> Result<()> {
        space.check_stage(self.stage)?;
        if self.atoms.len() != space.num_atoms(self.stage) {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }
}

/// Probability-weighted average of `xs` with weights `ws` (unnormalised),
/// with `0·∞ = 0`. Returns `None` when the total weight is zero.
pub fn weighted_mean<S: Scalar>(ws: &[S], xs: &[ExtReal<S>]) -> Option<ExtReal<S>> {
    let mass: S = ws.iter().copied().sum();
    if !(mass > S::zero()) {
        return None;
    }
    let mut acc = ExtReal::zero();
    for (w, x) in ws.iter().zip(xs) {
        acc = acc + *x * *w;
    }
    Some(if acc.is_finite() { ExtReal::of(acc.get() / mass) } else { acc })
}

/// `E[X | F_t]` under the reference probability.
pub fn cond_expect<S: Scalar>(x: &XVar<S>, t: usize) -> Result<TVar<S>> {
    let space = x.space();
    space.check_stage(t)?;
    let probs = space.probs();
    let values = space
        .atoms(t)
        .iter()
        .map(|r| weighted_mean(&probs[r.clone()], &x.values()[r.clone()]).expect("positive atom mass"))
        .collect();
    TVar::new(space.clone(), t, values)
}

/// `E^Q[X | F_t]` for per-leaf weights `q` (nonnegative, summing to one).
///
/// With `require_agreement`, `Q` must coincide with the reference
/// probability on every stage-`t` atom (tolerance `1e-10`).
pub fn cond_expect_q<S: Scalar>(x: &XVar<S>, t: usize, q: &[S], require_agreement: bool) -> Result<TVar<S>> {
    let space = x.space();
    space.check_stage(t)?;
    if q.len() != space.num_leaves() {
        return Err(Error::DimensionMismatch {
            expected: space.num_leaves(),
            got: q.len(),
        });
    }
    if q.iter().any(|w| !(w.is_finite() && *w >= S::zero())) {
        return Err(Error::InvalidValue("Q weights must be finite and nonnegative".into()));
    }
    let total: S = q.iter().copied().sum();
    if (total - S::one()).abs() > S::lit(1e-10) {
        return Err(Error::InvalidValue(format!("Q weights sum to {total}, expected 1")));
    }
    let mut values = Vec::with_capacity(space.num_atoms(t));
    for (a, r) in space.atoms(t).iter().enumerate() {
        if require_agreement {
            let qa: S = q[r.clone()].iter().copied().sum();
            if (qa - space.atom_prob(t, a)).abs() > S::lit(1e-10) {
                return Err(Error::InvalidValue(format!(
                    "Q does not agree with P on atom {a} at stage {t}"
                )));
            }
        }
        let v = weighted_mean(&q[r.clone()], &x.values()[r.clone()])
            .ok_or(Error::ZeroMassAtom { stage: t, atom: a })?;
        values.push(v);
    }
    TVar::new(space.clone(), t, values)
}

/// Atomwise minimum of the leaf values.
pub fn ess_inf_on_atoms<S: Scalar>(x: &XVar<S>, t: usize) -> Result<TVar<S>> {
    x.space().check_stage(t)?;
    let values = x
        .space()
        .atoms(t)
        .iter()
        .map(|r| x.values()[r.clone()].iter().copied().min().expect("nonempty atom"))
        .collect();
    TVar::new(x.space().clone(), t, values)
}

/// Atomwise maximum of the leaf values.
pub fn ess_sup_on_atoms<S: Scalar>(x: &XVar<S>, t: usize) -> Result<TVar<S>> {
    x.space().check_stage(t)?;
    let values = x
        .space()
        .atoms(t)
        .iter()
        .map(|r| x.values()[r.clone()].iter().copied().max().expect("nonempty atom"))
        .collect();
    TVar::new(x.space().clone(), t, values)
}

/// `X1·1_B + X2·1_{B^c}`.
pub fn paste<S: Scalar>(x1: &XVar<S>, x2: &XVar<S>, b: &EventMask) -> Result<XVar<S>> {
    x1.check_same(x2)?;
    b.check(x1.space())?;
    let space = x1.space();
    let vals = (0..space.num_leaves())
        .map(|l| if b.contains_leaf(space, l) { x1.get(l) } else { x2.get(l) })
        .collect();
    XVar::from_ext(space.clone(), vals)
}
