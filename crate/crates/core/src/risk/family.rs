use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{ExtReal, FilteredSpace, TVar, XVar};
use crate::measures::{PerformanceMeasure, RiskAversion};
use crate::scalar::Scalar;

use super::entropic::entropic_log_level;
use super::induce::{check_level, induce_atom, TOL_C};

/// Default tolerance of the level bisection in `reconstruct`.
pub const TOL_Z: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Induced,
    ClosedForm,
    UserSupplied,
}

/// A one-parameter family `(σ_t^z)` of conditional risk measures indexed
/// by levels in an open interval.
pub trait StandardFamily<S: Scalar>: Send + Sync {
    fn interval(&self) -> (ExtReal<S>, ExtReal<S>);

    /// `σ_t^z(X)` on one atom of stage `t`.
    fn risk_atom(&self, z: S, t: usize, atom: usize, x: &XVar<S>) -> Result<ExtReal<S>>;

    fn risk(&self, z: S, t: usize, x: &XVar<S>) -> Result<TVar<S>> {
        let (lo, hi) = self.interval();
        check_level(z, lo, hi)?;
        let space = x.space();
        space.check_stage(t)?;
        let values = (0..space.num_atoms(t))
            .map(|a| self.risk_atom(z, t, a, x))
            .collect::<Result<Vec<_>>>()?;
        TVar::bounded_above(space.clone(), t, values)
    }

    fn provenance(&self) -> Provenance;

    fn name(&self) -> String;

    /// Absolute accuracy of the values returned (bisection width).
    fn accuracy(&self) -> S {
        S::zero()
    }

    /// Pushes the level towards `z_d = −∞` until `esssup σ_t^z(0) < −target`.
    /// `None` when `z_d` is finite.
    fn limit_at_zero(&self, space: &Arc<FilteredSpace<S>>, t: usize, target: S) -> Result<Option<LimitCheck>> {
        numeric_limit(self, space, t, target)
    }
}

/// Outcome of pushing the level towards `−∞`.
#[derive(Debug, Clone, Serialize)]
pub struct LimitCheck {
    pub target: f64,
    pub reached: bool,
    /// Level at which the search stopped; `-inf` when only representable
    /// through `log_level`.
    pub level: f64,
    /// `ln(1 − z)` for closed-form entropic families.
    pub log_level: Option<f64>,
    pub esssup: f64,
    pub method: String,
}

/// Closed-form limit for entropic families, in log-level coordinates.
fn entropic_limit<S: Scalar>(
    lambda: &RiskAversion<S>,
    space: &Arc<FilteredSpace<S>>,
    t: usize,
    target: S,
) -> Result<LimitCheck> {
    let zero = XVar::constant(space.clone(), S::zero());
    let mut w = S::one();
    loop {
        let sup = entropic_log_level(lambda, t, w, &zero)?.ess_sup();
        if sup < ExtReal::of(-target) || !w.is_finite() {
            let z = -w.exp_m1();
            return Ok(LimitCheck {
                target: target.as_f64(),
                reached: sup < ExtReal::of(-target),
                level: z.as_f64(),
                log_level: Some(w.as_f64()),
                esssup: sup.get().as_f64(),
                method: "closed_form_log_level".into(),
            });
        }
        w = w * S::two();
    }
}

/// The family `ρ_t^z(X) = inf{c : β_t(X + c) >= z}` induced by a measure.
pub struct InducedFamily<S, M> {
    pub measure: M,
    pub tol_c: S,
}

impl<S: Scalar, M: PerformanceMeasure<S>> InducedFamily<S, M> {
    pub fn new(measure: M) -> Self {
        Self {
            measure,
            tol_c: S::lit(TOL_C),
        }
    }

    pub fn with_tol(measure: M, tol_c: S) -> Self {
        Self { measure, tol_c }
    }
}

impl<S: Scalar, M: PerformanceMeasure<S>> StandardFamily<S> for InducedFamily<S, M> {
    fn interval(&self) -> (ExtReal<S>, ExtReal<S>) {
        self.measure.bounds()
    }

    fn risk_atom(&self, z: S, t: usize, atom: usize, x: &XVar<S>) -> Result<ExtReal<S>> {
        let space = x.space();
        induce_atom(&self.measure, space, t, atom, z, x.on_atom(t, atom), self.tol_c)
    }

    fn provenance(&self) -> Provenance {
        Provenance::Induced
    }

    fn name(&self) -> String {
        format!("induced({})", self.measure.name())
    }

    fn accuracy(&self) -> S {
        self.tol_c
    }

    fn limit_at_zero(&self, space: &Arc<FilteredSpace<S>>, t: usize, target: S) -> Result<Option<LimitCheck>> {
        match self.measure.exponential_risk_aversion() {
            Some(lambda) => entropic_limit(lambda, space, t, target).map(Some),
            None => numeric_limit(self, space, t, target),
        }
    }
}

fn numeric_limit<S: Scalar, F: StandardFamily<S> + ?Sized>(
    f: &F,
    space: &Arc<FilteredSpace<S>>,
    t: usize,
    target: S,
) -> Result<Option<LimitCheck>> {
    let (zd, zu) = f.interval();
    if !zd.is_neg_inf() {
        return Ok(None);
    }
    let zero = XVar::constant(space.clone(), S::zero());
    let floor = -S::max_value().sqrt();
    let mut z = if zu.is_finite() { zu.get().min(S::zero()) - S::one() } else { -S::one() };
    loop {
        let sup = f.risk(z, t, &zero)?.ess_sup();
        if sup < ExtReal::of(-target) || z <= floor {
            return Ok(Some(LimitCheck {
                target: target.as_f64(),
                reached: sup < ExtReal::of(-target),
                level: z.as_f64(),
                log_level: None,
                esssup: sup.get().as_f64(),
                method: "numeric".into(),
            }));
        }
        z = z * S::two();
    }
}

/// Conditional entropic risk `ln E_t[e^{−λ_t X}]/λ_t − ln(1 − z)/λ_t`,
/// `z ∈ (−∞, 1)`.
pub struct EntropicFamily<S> {
    pub lambda: RiskAversion<S>,
}

impl<S: Scalar> StandardFamily<S> for EntropicFamily<S> {
    fn interval(&self) -> (ExtReal<S>, ExtReal<S>) {
        (ExtReal::neg_inf(), ExtReal::of(S::one()))
    }

    fn risk_atom(&self, z: S, t: usize, atom: usize, x: &XVar<S>) -> Result<ExtReal<S>> {
        Ok(self.risk(z, t, x)?.get(atom))
    }

    fn risk(&self, z: S, t: usize, x: &XVar<S>) -> Result<TVar<S>> {
        check_level(z, ExtReal::neg_inf(), ExtReal::of(S::one()))?;
        entropic_log_level(&self.lambda, t, (-z).ln_1p(), x)
    }

    fn provenance(&self) -> Provenance {
        Provenance::ClosedForm
    }

    fn name(&self) -> String {
        "entropic".into()
    }

    fn limit_at_zero(&self, space: &Arc<FilteredSpace<S>>, t: usize, target: S) -> Result<Option<LimitCheck>> {
        entropic_limit(&self.lambda, space, t, target).map(Some)
    }
}

type RiskFn<S> = dyn Fn(S, usize, &XVar<S>) -> Result<TVar<S>> + Send + Sync;

/// A family given by an arbitrary evaluator.
pub struct FnFamily<S> {
    pub interval: (ExtReal<S>, ExtReal<S>),
    pub name: String,
    f: Box<RiskFn<S>>,
}

impl<S: Scalar> FnFamily<S> {
    pub fn new(
        name: impl Into<String>,
        interval: (ExtReal<S>, ExtReal<S>),
        f: impl Fn(S, usize, &XVar<S>) -> Result<TVar<S>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            interval,
            name: name.into(),
            f: Box::new(f),
        }
    }
}

impl<S: Scalar> StandardFamily<S> for FnFamily<S> {
    fn interval(&self) -> (ExtReal<S>, ExtReal<S>) {
        self.interval
    }

    fn risk_atom(&self, z: S, t: usize, atom: usize, x: &XVar<S>) -> Result<ExtReal<S>> {
        Ok(self.risk(z, t, x)?.get(atom))
    }

    fn risk(&self, z: S, t: usize, x: &XVar<S>) -> Result<TVar<S>> {
        check_level(z, self.interval.0, self.interval.1)?;
        let v = (self.f)(z, t, x)?;
        if v.stage() != t {
            return Err(Error::InvalidArgument(format!(
                "family {} returned a stage-{} variable for stage {t}",
                self.name,
                v.stage()
            )));
        }
        Ok(v)
    }

    fn provenance(&self) -> Provenance {
        Provenance::UserSupplied
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

/// Measure generated by a family, with the atoms where the crossing in `z`
/// looked flat (`|σ| <= tol_c` on both sides of the returned level).
#[derive(Debug, Clone)]
pub struct Reconstruction<S> {
    pub values: TVar<S>,
    pub flat_crossings: Vec<usize>,
}

/// `β_t(X) = z_d` on `B_X = ∩_z {σ_t^z(X) >= 0}` and
/// `sup{z : σ_t^z(X) < 0}` elsewhere.
///
/// Negativity is tested against the family's own accuracy, or [`TOL_C`]
/// for exact families. The returned level is off by roughly that accuracy
/// divided by the slope of `σ^z` in `z`, so atoms where the slope is tiny
/// need a family built with a tighter tolerance.
pub fn reconstruct<S, F>(f: &F, t: usize, x: &XVar<S>) -> Result<Reconstruction<S>>
where
    S: Scalar,
    F: StandardFamily<S> + ?Sized,
{
    let acc = f.accuracy();
    let tol_c = if acc > S::zero() { acc } else { S::lit(TOL_C) };
    reconstruct_with(f, t, x, S::lit(TOL_Z), tol_c)
}

/// [`reconstruct`] with explicit tolerances. Negativity is tested as
/// `σ < −tol_c`.
///
/// Infinite ends of the level interval are bracketed by doubling; the
/// bracket is then bisected in `u = atan z` until both its `u`-width and
/// its `z`-width are at most `tol_z`.
pub fn reconstruct_with<S, F>(f: &F, t: usize, x: &XVar<S>, tol_z: S, tol_c: S) -> Result<Reconstruction<S>>
where
    S: Scalar,
    F: StandardFamily<S> + ?Sized,
{
    let space = x.space();
    space.check_stage(t)?;
    let (zd, zu) = f.interval();
    let cap = S::max_value().sqrt();
    let mut values = Vec::with_capacity(space.num_atoms(t));
    let mut flat = Vec::new();
    for a in 0..space.num_atoms(t) {
        let neg = |z: S| -> Result<bool> { Ok(f.risk_atom(z, t, a, x)? < ExtReal::of(-tol_c)) };
        let edge = |b: S| tol_z * S::one().max(b.abs());

        // lo: negative risk; hi: nonnegative risk
        let lo = if zd.is_finite() {
            let z0 = zd.get() + edge(zd.get());
            if !neg(z0)? {
                values.push(zd);
                continue;
            }
            z0
        } else {
            let mut z = if zu.is_finite() { zu.get().min(S::zero()) - S::one() } else { -S::one() };
            loop {
                if neg(z)? {
                    break Some(z);
                }
                if z < -cap {
                    break None;
                }
                z = z * S::two();
            }
            .map_or(S::neg_infinity(), |z| z)
        };
        if lo.is_infinite() {
            values.push(zd);
            continue;
        }
        let hi = if zu.is_finite() {
            let z1 = zu.get() - edge(zu.get());
            if neg(z1)? || z1 <= lo {
                values.push(zu);
                continue;
            }
            z1
        } else {
            let mut z = lo.max(S::zero()) + S::one();
            loop {
                if !neg(z)? {
                    break Some(z);
                }
                if z > cap {
                    break None;
                }
                z = z * S::two();
            }
            .map_or(S::infinity(), |z| z)
        };
        if hi.is_infinite() {
            values.push(zu);
            continue;
        }
        let (mut lo, mut hi) = (lo, hi);
        while hi.atan() - lo.atan() > tol_z || hi - lo > tol_z {
            let mid = ((lo.atan() + hi.atan()) * S::half()).tan();
            let mid = if mid > lo && mid < hi { mid } else { lo + (hi - lo) * S::half() };
            if mid <= lo || mid >= hi {
                break;
            }
            if neg(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = lo + (hi - lo) * S::half();
        let probe = S::lit(1e-6) * S::one().max(z.abs());
        let near = |zp: S| -> Result<bool> {
            if ExtReal::of(zp) <= zd || ExtReal::of(zp) >= zu {
                return Ok(false);
            }
            let v = f.risk_atom(zp, t, a, x)?;
            Ok(v.is_finite() && v.get().abs() <= tol_c)
        };
        if near(z - probe)? && near(z + probe)? {
            flat.push(a);
        }
        values.push(ExtReal::of(z));
    }
    Ok(Reconstruction {
        values: TVar::new(space.clone(), t, values)?,
        flat_crossings: flat,
    })
}

/// Risk values on a level grid.
#[derive(Debug, Clone, Serialize)]
pub struct RiskCurve {
    pub stage: usize,
    pub atoms: Vec<String>,
    pub levels: Vec<f64>,
    /// `rho[k][a]`: value at level `k` on atom `a`.
    pub rho: Vec<Vec<crate::io::Num>>,
    pub monotone: bool,
    /// `(atom, k)` where the step from level `k` to `k+1` is much larger
    /// than the neighbouring slopes suggest.
    pub suspected_jumps: Vec<(usize, usize)>,
    pub limit: Option<LimitCheck>,
}

impl RiskCurve {
    /// CSV with columns `atom_id,z,rho`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("atom_id,z,rho\n");
        for (a, id) in self.atoms.iter().enumerate() {
            for (k, z) in self.levels.iter().enumerate() {
                let v = self.rho[k][a].0;
                let vs = if v == f64::INFINITY {
                    "inf".to_string()
                } else if v == f64::NEG_INFINITY {
                    "-inf".to_string()
                } else {
                    format!("{v:?}")
                };
                out.push_str(&format!("{id},{z:?},{vs}\n"));
            }
        }
        out
    }
}

/// Evenly spaced grid of `steps` levels from `lo` to `hi` inclusive.
pub fn linear_grid<S: Scalar>(lo: S, hi: S, steps: usize) -> Result<Vec<S>> {
    if steps == 0 || !(lo.is_finite() && hi.is_finite()) || (steps > 1 && !(hi > lo)) {
        return Err(Error::InvalidArgument(format!("bad grid [{lo}, {hi}] with {steps} steps")));
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    let n = S::lit((steps - 1) as f64);
    Ok((0..steps).map(|k| lo + (hi - lo) * S::lit(k as f64) / n).collect())
}

/// Induced risk at each level of `grid`, checked for monotonicity in `z`
/// and for jumps; when `z_d = −∞` also pushes `esssup σ_t^z(0)` below
/// `−10^6`.
pub fn risk_curve<S, F>(f: &F, t: usize, x: &XVar<S>, grid: &[S]) -> Result<RiskCurve>
where
    S: Scalar,
    F: StandardFamily<S> + ?Sized,
{
    let space = x.space();
    space.check_stage(t)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty level grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("level grid must be strictly increasing".into()));
    }
    let (zd, zu) = f.interval();
    for &z in grid {
        check_level(z, zd, zu)?;
    }
    let points = grid.iter().map(|&z| f.risk(z, t, x)).collect::<Result<Vec<_>>>()?;
    let n_atoms = space.num_atoms(t);
    let slack = f.accuracy() * S::two();
    let mut monotone = true;
    let mut jumps = Vec::new();
    for a in 0..n_atoms {
        let col: Vec<ExtReal<S>> = points.iter().map(|p| p.get(a)).collect();
        if col.windows(2).any(|w| w[1] < w[0] - slack) {
            monotone = false;
        }
        let slope = |k: usize| -> Option<S> {
            let d = col[k + 1] - col[k];
            d.is_finite().then(|| d.get().max(S::zero()) / (grid[k + 1] - grid[k]))
        };
        for k in 0..grid.len().saturating_sub(1) {
            let (Some(s), true) = (slope(k), col[k].is_finite() && col[k + 1].is_finite()) else {
                continue;
            };
            let left = if k > 0 { slope(k - 1) } else { None };
            let right = if k + 2 < grid.len() { slope(k + 1) } else { None };
            let neighbour = match (left, right) {
                (Some(l), Some(r)) => l.max(r),
                (Some(v), None) | (None, Some(v)) => v,
                (None, None) => continue,
            };
            let step = s * (grid[k + 1] - grid[k]);
            if step > S::lit(1e-6) + S::lit(10.0) * neighbour * (grid[k + 1] - grid[k]) {
                jumps.push((a, k));
            }
        }
    }
    let limit = f.limit_at_zero(space, t, S::lit(1e6))?;
    Ok(RiskCurve {
        stage: t,
        atoms: (0..n_atoms).map(|a| space.atom_id(t, a)).collect(),
        levels: grid.iter().map(|z| z.as_f64()).collect(),
        rho: points.iter().map(|p| crate::io::nums(p.values())).collect(),
        monotone,
        suspected_jumps: jumps,
        limit,
    })
}
