use serde::Serialize;

use crate::bisect::{first_true, simplest_in, BracketOptions, Crossing};
use crate::error::{Error, Result};
use crate::io::{nums, Num};
use crate::lattice::{ExtReal, FilteredSpace, TVar, XVar};
use crate::measures::PerformanceMeasure;
use crate::scalar::Scalar;

/// Default bisection tolerance on cash amounts.
pub const TOL_C: f64 = 1e-10;

/// Induced risk at one level: one value per atom, `−∞` allowed.
#[derive(Debug, Clone)]
pub struct RiskPoint<S> {
    pub z: S,
    pub values: TVar<S>,
}

impl<S: Scalar> RiskPoint<S> {
    pub fn stage(&self) -> usize {
        self.values.stage()
    }

    pub fn get(&self, atom: usize) -> ExtReal<S> {
        self.values.get(atom)
    }
}

#[derive(Serialize)]
struct RiskPointJson {
    stage: usize,
    z: Num,
    atoms: Vec<String>,
    rho: Vec<Num>,
}

impl<S: Scalar> Serialize for RiskPoint<S> {
    fn serialize<Se: serde::Serializer>(&self, s: Se) -> std::result::Result<Se::Ok, Se::Error> {
        let space = self.values.space();
        let t = self.stage();
        RiskPointJson {
            stage: t,
            z: Num(self.z.as_f64()),
            atoms: (0..space.num_atoms(t)).map(|a| space.atom_id(t, a)).collect(),
            rho: nums(self.values.values()),
        }
        .serialize(s)
    }
}

/// Fails unless `lo < z < hi`.
pub fn check_level<S: Scalar>(z: S, lo: ExtReal<S>, hi: ExtReal<S>) -> Result<()> {
    let zz = ExtReal::new(z)?;
    if zz > lo && zz < hi {
        Ok(())
    } else {
        Err(Error::LevelOutOfRange {
            z: z.as_f64(),
            lo: lo.get().as_f64(),
            hi: hi.get().as_f64(),
        })
    }
}

/// `inf{c : β_t(X + c) >= z}` on one atom, to bisection tolerance `tol`.
///
/// Returns the coarsest dyadic point of the final bracket (see
/// [`simplest_in`]), so exact thresholds such as `0` come out exactly.
pub fn induce_atom<S, M>(m: &M, space: &FilteredSpace<S>, t: usize, atom: usize, z: S, x: &[ExtReal<S>], tol: S) -> Result<ExtReal<S>>
where
    S: Scalar,
    M: PerformanceMeasure<S> + ?Sized,
{
    let target = ExtReal::of(z);
    let mut buf = x.to_vec();
    let pred = |c: S| -> Result<bool> {
        for (b, &xi) in buf.iter_mut().zip(x) {
            *b = xi + c;
        }
        Ok(m.eval_atom(space, t, atom, &buf)? >= target)
    };
    match first_true(pred, BracketOptions::with_tol(tol))? {
        Crossing::NegInf => Ok(ExtReal::neg_inf()),
        Crossing::Bracket { lo, hi } => Ok(ExtReal::of(simplest_in(lo, hi))),
        Crossing::Unreached => Err(Error::Inconsistent(format!(
            "{}: level {z} not reached by shifts up to 2^60 at stage {t}, atom {atom}",
            m.name()
        ))),
    }
}

/// The induced risk `ρ_t^z(X)`, per atom, at tolerance [`TOL_C`].
pub fn induce_risk<S, M>(m: &M, t: usize, z: S, x: &XVar<S>) -> Result<RiskPoint<S>>
where
    S: Scalar,
    M: PerformanceMeasure<S> + ?Sized,
{
    induce_risk_tol(m, t, z, x, S::lit(TOL_C))
}

pub fn induce_risk_tol<S, M>(m: &M, t: usize, z: S, x: &XVar<S>, tol: S) -> Result<RiskPoint<S>>
where
    S: Scalar,
    M: PerformanceMeasure<S> + ?Sized,
{
    let (lo, hi) = m.bounds();
    check_level(z, lo, hi)?;
    let space = x.space();
    space.check_stage(t)?;
    let values = (0..space.num_atoms(t))
        .map(|a| induce_atom(m, space, t, a, z, x.on_atom(t, a), tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(RiskPoint {
        z,
        values: TVar::bounded_above(space.clone(), t, values)?,
    })
}
