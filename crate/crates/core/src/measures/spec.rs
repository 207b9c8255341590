use crate::error::{Error, Result};
use crate::lattice::{weighted_mean, ExtReal, FilteredSpace, TVar, XVar};
use crate::scalar::Scalar;

use super::utility::UtilitySpec;

/// Default tie tolerance for strict inequalities such as `E_t[X] > 0`.
pub const EPS_STRICT: f64 = 1e-12;

/// A conditional performance measure `β_t`, evaluable at every stage.
///
/// Implementors provide the value on one atom from the payoff restricted to
/// that atom; [`PerformanceMeasure::evaluate`] assembles the stage variable.
/// A measure whose value on an atom depends on leaves outside it must
/// override `evaluate` as well.
pub trait PerformanceMeasure<S: Scalar>: Send + Sync {
    /// Non-random bounds `(z_d, z_u)`.
    fn bounds(&self) -> (ExtReal<S>, ExtReal<S>);

    /// `β_t(X)` on atom `atom` of stage `t`; `x` holds the leaf values of
    /// that atom in leaf order.
    fn eval_atom(&self, space: &FilteredSpace<S>, t: usize, atom: usize, x: &[ExtReal<S>]) -> Result<ExtReal<S>> {
        self.eval_atom_flagged(space, t, atom, x).map(|(v, _)| v)
    }

    /// Like [`eval_atom`](Self::eval_atom), also reporting whether a
    /// strict-inequality case split was decided inside the tie tolerance.
    fn eval_atom_flagged(
        &self,
        space: &FilteredSpace<S>,
        t: usize,
        atom: usize,
        x: &[ExtReal<S>],
    ) -> Result<(ExtReal<S>, bool)>;

    fn evaluate(&self, t: usize, x: &XVar<S>) -> Result<TVar<S>> {
        let space = x.space();
        space.check_stage(t)?;
        let vals = (0..space.num_atoms(t))
            .map(|a| self.eval_atom(space, t, a, x.on_atom(t, a)))
            .collect::<Result<Vec<_>>>()?;
        TVar::new(space.clone(), t, vals)
    }

    /// Declares 0-homogeneity (the measure is offered as an acceptability
    /// index).
    fn is_scale_invariant(&self) -> bool {
        false
    }

    fn name(&self) -> String;

    /// Risk aversion when the measure is the exponential utility
    /// `E_t[1 − e^{−λ_t X}]`, whose induced family has a closed form.
    fn exponential_risk_aversion(&self) -> Option<&RiskAversion<S>> {
        None
    }
}

impl<S: Scalar, M: PerformanceMeasure<S> + ?Sized> PerformanceMeasure<S> for &M {
    fn bounds(&self) -> (ExtReal<S>, ExtReal<S>) {
        (**self).bounds()
    }

    fn eval_atom(&self, space: &FilteredSpace<S>, t: usize, atom: usize, x: &[ExtReal<S>]) -> Result<ExtReal<S>> {
        (**self).eval_atom(space, t, atom, x)
    }

    fn eval_atom_flagged(
        &self,
        space: &FilteredSpace<S>,
        t: usize,
        atom: usize,
        x: &[ExtReal<S>],
    ) -> Result<(ExtReal<S>, bool)> {
        (**self).eval_atom_flagged(space, t, atom, x)
    }

    fn evaluate(&self, t: usize, x: &XVar<S>) -> Result<TVar<S>> {
        (**self).evaluate(t, x)
    }

    fn is_scale_invariant(&self) -> bool {
        (**self).is_scale_invariant()
    }

    fn name(&self) -> String {
        (**self).name()
    }

    fn exponential_risk_aversion(&self) -> Option<&RiskAversion<S>> {
        (**self).exponential_risk_aversion()
    }
}

/// `β_t(X)` for any measure.
pub fn evaluate<S: Scalar, M: PerformanceMeasure<S> + ?Sized>(m: &M, t: usize, x: &XVar<S>) -> Result<TVar<S>> {
    m.evaluate(t, x)
}

/// Risk aversion of the exponential utility: a constant or one positive
/// value per atom of every stage.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskAversion<S> {
    Constant(S),
    Process(Vec<Vec<S>>),
}

impl<S: Scalar> RiskAversion<S> {
    pub fn at(&self, t: usize, atom: usize) -> Result<S> {
        match self {
            Self::Constant(l) => Ok(*l),
            Self::Process(p) => p
                .get(t)
                .and_then(|stage| stage.get(atom))
                .copied()
                .ok_or_else(|| Error::InvalidMeasure(format!("risk aversion missing for atom {atom} at stage {t}"))),
        }
    }

    /// Smallest value over all stages and atoms.
    pub fn min(&self) -> S {
        match self {
            Self::Constant(l) => *l,
            Self::Process(p) => p.iter().flatten().copied().fold(S::infinity(), S::min),
        }
    }

    pub fn max(&self) -> S {
        match self {
            Self::Constant(l) => *l,
            Self::Process(p) => p.iter().flatten().copied().fold(S::neg_infinity(), S::max),
        }
    }

    pub fn validate_for(&self, space: &FilteredSpace<S>) -> Result<()> {
        match self {
            Self::Constant(l) => {
                if !(l.is_finite() && *l > S::zero()) {
                    return Err(Error::InvalidMeasure(format!("risk aversion {l} must be positive")));
                }
            }
            Self::Process(p) => {
                if p.len() != space.last_stage() + 1 {
                    return Err(Error::InvalidMeasure(format!(
                        "risk aversion given for {} stages, space has {}",
                        p.len(),
                        space.last_stage() + 1
                    )));
                }
                for (t, stage) in p.iter().enumerate() {
                    if stage.len() != space.num_atoms(t) {
                        return Err(Error::DimensionMismatch {
                            expected: space.num_atoms(t),
                            got: stage.len(),
                        });
                    }
                    if stage.iter().any(|l| !(l.is_finite() && *l > S::zero())) {
                        return Err(Error::InvalidMeasure(format!(
                            "risk aversion at stage {t} must be positive and finite"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Risk term in the denominator of a reward-to-risk ratio.
#[derive(Debug, Clone, PartialEq)]
pub enum Denominator<S> {
    /// `(E_t[(X^−)^p])^{1/p}`, `p >= 1`.
    Lpm { p: S },
    /// Conditional Average Value at Risk at level `λ ∈ (0, 1]`, truncated
    /// at zero.
    AvarTrunc { level: S },
}

/// Declarative description of a conditional performance measure.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind<S> {
    /// `E^Q_t[X]`; `q` are per-leaf weights of `Q` (reference probability
    /// when absent).
    CondExpectation { q: Option<Vec<S>> },
    /// `E_t[U(X + W)]`. `utilities` holds either one utility or one per
    /// leaf; `endowment` is an optional bounded per-leaf `W`.
    ExpectedUtility {
        utilities: Vec<UtilitySpec<S>>,
        endowment: Option<Vec<S>>,
    },
    /// `E_t[1 − e^{−λ_t X}]`.
    ExponentialUtility { lambda: RiskAversion<S> },
    /// `U^{−1}(E_t[U(X)])` for a deterministic strictly increasing `U`.
    CertaintyEquivalent { utility: UtilitySpec<S> },
    /// `E_t[X]/E_t[X^−]` on `{E_t[X] > 0}`, zero elsewhere.
    Glr,
    /// `E_t[U(X)]/σ_t(X)` on `{E_t[U(X)] > 0}`, zero elsewhere.
    RewardRisk {
        utility: UtilitySpec<S>,
        denominator: Denominator<S>,
        /// Sets the value to `+∞` wherever the risk term is nonpositive,
        /// whatever the reward. Off by default: then `+∞` only where the
        /// reward is also positive.
        infinite_on_nonpositive_risk: bool,
    },
}

/// A measure kind plus the tie tolerance used for strict inequalities.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpec<S> {
    pub kind: MeasureKind<S>,
    pub eps_strict: S,
}

impl<S: Scalar> MeasureSpec<S> {
    pub fn new(kind: MeasureKind<S>) -> Result<Self> {
        let m = Self {
            kind,
            eps_strict: S::lit(EPS_STRICT),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn glr() -> Self {
        Self::new(MeasureKind::Glr).expect("valid")
    }

    pub fn cond_expectation() -> Self {
        Self::new(MeasureKind::CondExpectation { q: None }).expect("valid")
    }

    pub fn exp_utility(lambda: S) -> Result<Self> {
        Self::new(MeasureKind::ExponentialUtility {
            lambda: RiskAversion::Constant(lambda),
        })
    }

    pub fn exp_utility_process(lambda: Vec<Vec<S>>) -> Result<Self> {
        Self::new(MeasureKind::ExponentialUtility {
            lambda: RiskAversion::Process(lambda),
        })
    }

    pub fn expected_utility(utility: UtilitySpec<S>) -> Result<Self> {
        Self::new(MeasureKind::ExpectedUtility {
            utilities: vec![utility],
            endowment: None,
        })
    }

    pub fn certainty_equivalent(utility: UtilitySpec<S>) -> Result<Self> {
        Self::new(MeasureKind::CertaintyEquivalent { utility })
    }

    /// Expectation over the `p`-th lower partial moment.
    pub fn lpm_ratio(p: S) -> Result<Self> {
        Self::new(MeasureKind::RewardRisk {
            utility: UtilitySpec::Linear,
            denominator: Denominator::Lpm { p },
            infinite_on_nonpositive_risk: false,
        })
    }

    /// Reward over truncated Average Value at Risk.
    pub fn avar_ratio(utility: UtilitySpec<S>, level: S) -> Result<Self> {
        Self::new(MeasureKind::RewardRisk {
            utility,
            denominator: Denominator::AvarTrunc { level },
            infinite_on_nonpositive_risk: false,
        })
    }

    pub fn with_eps_strict(mut self, eps: S) -> Result<Self> {
        if !(eps >= S::zero() && eps.is_finite()) {
            return Err(Error::InvalidMeasure(format!("strictness tolerance {eps} must be >= 0")));
        }
        self.eps_strict = eps;
        Ok(self)
    }

    /// Space-independent validation.
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            MeasureKind::CondExpectation { q } => {
                if let Some(q) = q {
                    if q.iter().any(|w| !(w.is_finite() && *w >= S::zero())) {
                        return Err(Error::InvalidMeasure("Q weights must be nonnegative".into()));
                    }
                    let total: S = q.iter().copied().sum();
                    if (total - S::one()).abs() > S::lit(1e-10) {
                        return Err(Error::InvalidMeasure(format!("Q weights sum to {total}")));
                    }
                }
            }
            MeasureKind::ExpectedUtility { utilities, endowment } => {
                if utilities.is_empty() {
                    return Err(Error::InvalidMeasure("no utility given".into()));
                }
                for u in utilities {
                    u.validate()?;
                }
                let sup = utilities[0].sup();
                if utilities.iter().any(|u| u.sup() != sup) {
                    return Err(Error::InvalidMeasure(
                        "per-leaf utilities must share U(+inf) so that z_u is non-random".into(),
                    ));
                }
                if let Some(w) = endowment {
                    if w.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidMeasure("endowment must be bounded".into()));
                    }
                }
            }
            MeasureKind::ExponentialUtility { lambda } => {
                if !(lambda.min() > S::zero() && lambda.max().is_finite()) {
                    return Err(Error::InvalidMeasure("risk aversion must be positive and bounded".into()));
                }
            }
            MeasureKind::CertaintyEquivalent { utility } => {
                utility.validate()?;
                if !utility.is_strictly_increasing() {
                    return Err(Error::InvalidMeasure(
                        "certainty equivalent needs a strictly increasing utility".into(),
                    ));
                }
            }
            MeasureKind::Glr => {}
            MeasureKind::RewardRisk {
                utility, denominator, ..
            } => {
                utility.validate()?;
                if !(utility.sup() > ExtReal::zero()) {
                    return Err(Error::InvalidMeasure("reward utility needs U(+inf) > 0".into()));
                }
                match denominator {
                    Denominator::Lpm { p } => {
                        if !(*p >= S::one() && p.is_finite()) {
                            return Err(Error::InvalidMeasure(format!("LPM order {p} must be >= 1")));
                        }
                    }
                    Denominator::AvarTrunc { level } => {
                        if !(*level > S::zero() && *level <= S::one()) {
                            return Err(Error::InvalidMeasure(format!("AVaR level {level} not in (0, 1]")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Validation of the parts that depend on the space.
    pub fn validate_for(&self, space: &FilteredSpace<S>) -> Result<()> {
        let n = space.num_leaves();
        let leaf_len = |len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected: n, got: len })
            }
        };
        match &self.kind {
            MeasureKind::CondExpectation { q: Some(q) } => leaf_len(q.len()),
            MeasureKind::ExpectedUtility { utilities, endowment } => {
                if utilities.len() != 1 {
                    leaf_len(utilities.len())?;
                }
                if let Some(w) = endowment {
                    leaf_len(w.len())?;
                }
                Ok(())
            }
            MeasureKind::ExponentialUtility { lambda } => lambda.validate_for(space),
            _ => Ok(()),
        }
    }

    fn eval_flagged(
        &self,
        space: &FilteredSpace<S>,
        t: usize,
        atom: usize,
        x: &[ExtReal<S>],
    ) -> Result<(ExtReal<S>, bool)> {
        let range = space.atoms(t)[atom].clone();
        if x.len() != range.len() {
            return Err(Error::DimensionMismatch {
                expected: range.len(),
                got: x.len(),
            });
        }
        let probs = &space.probs()[range.clone()];
        let mean = |vals: &[ExtReal<S>]| weighted_mean(probs, vals).expect("positive atom mass");
        let eps = self.eps_strict;
        let is_tie = |v: ExtReal<S>| v.is_finite() && v.get() > -eps && v.get() <= eps;
        match &self.kind {
            MeasureKind::CondExpectation { q } => match q {
                None => Ok((mean(x), false)),
                Some(q) => {
                    if q.len() != space.num_leaves() {
                        return Err(Error::DimensionMismatch {
                            expected: space.num_leaves(),
                            got: q.len(),
                        });
                    }
                    let v = weighted_mean(&q[range], x).ok_or(Error::ZeroMassAtom { stage: t, atom })?;
                    Ok((v, false))
                }
            },
            MeasureKind::ExpectedUtility { utilities, endowment } => {
                let vals: Vec<ExtReal<S>> = x
                    .iter()
                    .enumerate()
                    .map(|(i, &xi)| {
                        let leaf = range.start + i;
                        let u = if utilities.len() == 1 { &utilities[0] } else { &utilities[leaf] };
                        let w = endowment.as_ref().map_or(S::zero(), |w| w[leaf]);
                        u.value(xi + w)
                    })
                    .collect();
                Ok((mean(&vals), false))
            }
            MeasureKind::ExponentialUtility { lambda } => {
                let l = lambda.at(t, atom)?;
                let vals: Vec<ExtReal<S>> = x
                    .iter()
                    .map(|xi| {
                        if xi.is_pos_inf() {
                            ExtReal::of(S::one())
                        } else {
                            ExtReal::of(-(-l * xi.get()).exp_m1())
                        }
                    })
                    .collect();
                Ok((mean(&vals), false))
            }
            MeasureKind::CertaintyEquivalent { utility } => {
                let vals: Vec<ExtReal<S>> = x.iter().map(|&xi| utility.value(xi)).collect();
                Ok((utility.inverse(mean(&vals)), false))
            }
            MeasureKind::Glr => {
                let gain = mean(x);
                if gain.get() <= eps {
                    return Ok((ExtReal::zero(), is_tie(gain)));
                }
                let negs: Vec<ExtReal<S>> = x.iter().map(|v| v.neg_part()).collect();
                let loss = mean(&negs);
                Ok((ratio(gain, loss), false))
            }
            MeasureKind::RewardRisk {
                utility,
                denominator,
                infinite_on_nonpositive_risk,
            } => {
                let cond = space.conditional_probs(t, atom);
                let risk = match denominator {
                    Denominator::Lpm { p } => {
                        let moments: Vec<ExtReal<S>> =
                            x.iter().map(|v| ExtReal::of(v.neg_part().get().powf(*p))).collect();
                        ExtReal::of(mean(&moments).get().powf(S::one() / *p))
                    }
                    Denominator::AvarTrunc { level } => avar(&cond, x, *level),
                };
                if *infinite_on_nonpositive_risk && risk <= ExtReal::zero() {
                    return Ok((ExtReal::pos_inf(), false));
                }
                let vals: Vec<ExtReal<S>> = x.iter().map(|&xi| utility.value(xi)).collect();
                let reward = mean(&vals);
                if reward.get() <= eps {
                    return Ok((ExtReal::zero(), is_tie(reward)));
                }
                Ok((ratio(reward, risk.max(ExtReal::zero())), false))
            }
        }
    }
}

/// `a/b` for `a > 0`, `b >= 0` with `a/0 = +∞`.
fn ratio<S: Scalar>(a: ExtReal<S>, b: ExtReal<S>) -> ExtReal<S> {
    if a.is_pos_inf() || b.get() <= S::zero() {
        ExtReal::pos_inf()
    } else {
        ExtReal::of(a.get() / b.get())
    }
}

/// Average Value at Risk at level `level` of the payoff `x` with
/// conditional leaf probabilities `cond`: the worst outcomes receive
/// density `1/level` until unit mass is allocated.
pub fn avar<S: Scalar>(cond: &[S], x: &[ExtReal<S>], level: S) -> ExtReal<S> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].cmp(&x[b]));
    let mut remaining = S::one();
    let mut acc = ExtReal::zero();
    for i in idx {
        if remaining <= S::zero() {
            break;
        }
        let w = (cond[i] / level).min(remaining);
        remaining = remaining - w;
        acc = acc + (-x[i]) * w;
    }
    acc
}

impl<S: Scalar> PerformanceMeasure<S> for MeasureSpec<S> {
    fn bounds(&self) -> (ExtReal<S>, ExtReal<S>) {
        match &self.kind {
            MeasureKind::CondExpectation { .. } | MeasureKind::CertaintyEquivalent { .. } => {
                (ExtReal::neg_inf(), ExtReal::pos_inf())
            }
            MeasureKind::ExpectedUtility { utilities, .. } => (ExtReal::neg_inf(), utilities[0].sup()),
            MeasureKind::ExponentialUtility { .. } => (ExtReal::neg_inf(), ExtReal::of(S::one())),
            MeasureKind::Glr | MeasureKind::RewardRisk { .. } => (ExtReal::zero(), ExtReal::pos_inf()),
        }
    }

    fn eval_atom_flagged(
        &self,
        space: &FilteredSpace<S>,
        t: usize,
        atom: usize,
        x: &[ExtReal<S>],
    ) -> Result<(ExtReal<S>, bool)> {
        self.eval_flagged(space, t, atom, x)
    }

    fn is_scale_invariant(&self) -> bool {
        match &self.kind {
            MeasureKind::Glr => true,
            MeasureKind::RewardRisk { utility, .. } => utility.is_positively_homogeneous(),
            _ => false,
        }
    }

    fn exponential_risk_aversion(&self) -> Option<&RiskAversion<S>> {
        match &self.kind {
            MeasureKind::ExponentialUtility { lambda } => Some(lambda),
            _ => None,
        }
    }

    fn name(&self) -> String {
        match &self.kind {
            MeasureKind::CondExpectation { q: None } => "cond_expectation".into(),
            MeasureKind::CondExpectation { q: Some(_) } => "cond_expectation_q".into(),
            MeasureKind::ExpectedUtility { .. } => "expected_utility".into(),
            MeasureKind::ExponentialUtility { .. } => "exp_utility".into(),
            MeasureKind::CertaintyEquivalent { .. } => "certainty_equivalent".into(),
            MeasureKind::Glr => "glr".into(),
            MeasureKind::RewardRisk { denominator, .. } => match denominator {
                Denominator::Lpm { p } => format!("lpm_ratio(p={p})"),
                Denominator::AvarTrunc { level } => format!("avar_ratio(level={level})"),
            },
        }
    }
}

/// Evaluation together with the atoms where a strict case split was
/// decided inside the tie tolerance.
pub fn evaluate_flagged<S: Scalar, M: PerformanceMeasure<S> + ?Sized>(m: &M, t: usize, x: &XVar<S>) -> Result<(TVar<S>, Vec<bool>)> {
    let space = x.space();
    space.check_stage(t)?;
    let mut vals = Vec::with_capacity(space.num_atoms(t));
    let mut ties = Vec::with_capacity(space.num_atoms(t));
    for a in 0..space.num_atoms(t) {
        let (v, tie) = m.eval_atom_flagged(space, t, a, x.on_atom(t, a))?;
        vals.push(v);
        ties.push(tie);
    }
    Ok((TVar::new(space.clone(), t, vals)?, ties))
}
