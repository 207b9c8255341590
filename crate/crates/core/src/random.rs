//! Seeded generators for spaces, variables and events.
//!
//! Every randomized routine derives one independent stream per trial from
//! `(seed, trial)`, so results do not depend on how trials are scheduled.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lattice::{EventMask, ExtReal, FilteredSpace, TreeNode, XVar};
use crate::scalar::Scalar;

/// Independent stream for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Shape of randomly generated scenario trees.
#[derive(Debug, Clone, Copy)]
pub struct TreeShape {
    /// Number of stages including the root stage (`T + 1`).
    pub stages: usize,
    pub max_leaves: usize,
    pub max_branching: usize,
}

impl Default for TreeShape {
    fn default() -> Self {
        Self {
            stages: 3,
            max_leaves: 16,
            max_branching: 3,
        }
    }
}

/// Random tree with branching in `2..=max_branching` (falling back to a
/// single child once the leaf budget is exhausted) and random transition
/// probabilities bounded away from zero.
pub fn random_space<S: Scalar, R: Rng>(rng: &mut R, shape: TreeShape) -> Arc<FilteredSpace<S>> {
    assert!(shape.stages >= 1 && shape.max_leaves >= 1);
    // plan widths level by level so the leaf count never exceeds the cap
    let mut widths: Vec<Vec<usize>> = Vec::with_capacity(shape.stages);
    let mut nodes = 1usize;
    for _ in 0..shape.stages.saturating_sub(1) {
        let mut w = Vec::with_capacity(nodes);
        let mut total = 0usize;
        for i in 0..nodes {
            let others = nodes - i - 1;
            // leave room for at least one child per remaining node
            let budget = shape.max_leaves.saturating_sub(total + others);
            let cap = budget.min(shape.max_branching);
            let k = if cap >= 2 { rng.gen_range(2..=cap) } else { 1 };
            w.push(k);
            total += k;
        }
        widths.push(w);
        nodes = total;
    }
    fn build<S: Scalar, R: Rng>(rng: &mut R, widths: &[Vec<usize>], level: usize, idx: &mut [usize], label: String) -> TreeNode<S> {
        if level == widths.len() {
            return TreeNode::leaf(label);
        }
        let k = widths[level][idx[level]];
        idx[level] += 1;
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let children = raw
            .iter()
            .enumerate()
            .map(|(j, w)| (S::lit(w / sum), build(rng, widths, level + 1, idx, j.to_string())))
            .collect();
        TreeNode::node(label, children)
    }
    let mut idx = vec![0usize; widths.len()];
    let root = build::<S, R>(rng, &widths, 0, &mut idx, String::new());
    Arc::new(FilteredSpace::from_tree(&root).expect("generated tree is valid"))
}

/// Random payoff with leaves uniform on `[lo, hi]`; each leaf is `+∞`
/// with probability `p_inf`.
pub fn random_xvar<S: Scalar, R: Rng>(rng: &mut R, space: &Arc<FilteredSpace<S>>, lo: f64, hi: f64, p_inf: f64) -> XVar<S> {
    let vals = (0..space.num_leaves())
        .map(|_| {
            if p_inf > 0.0 && rng.gen_bool(p_inf) {
                ExtReal::pos_inf()
            } else {
                ExtReal::of(S::lit(rng.gen_range(lo..=hi)))
            }
        })
        .collect();
    XVar::from_ext(space.clone(), vals).expect("finite or +inf values")
}

/// Random stage-`t` payoff, constant on each stage-`t` atom.
pub fn random_stage_var<S: Scalar, R: Rng>(rng: &mut R, space: &Arc<FilteredSpace<S>>, t: usize, lo: f64, hi: f64) -> XVar<S> {
    let per_atom: Vec<f64> = (0..space.num_atoms(t)).map(|_| rng.gen_range(lo..=hi)).collect();
    let vals = (0..space.num_leaves())
        .map(|l| ExtReal::of(S::lit(per_atom[space.atom_of(t, l)])))
        .collect();
    XVar::from_ext(space.clone(), vals).expect("finite values")
}

/// Random nonnegative perturbation with leaves uniform on `[0, hi]`.
pub fn random_nonneg<S: Scalar, R: Rng>(rng: &mut R, space: &Arc<FilteredSpace<S>>, hi: f64) -> XVar<S> {
    random_xvar(rng, space, 0.0, hi, 0.0)
}

/// Random event of stage `t`; each atom included with probability ½.
pub fn random_event<S: Scalar, R: Rng>(rng: &mut R, space: &FilteredSpace<S>, t: usize) -> EventMask {
    let atoms = (0..space.num_atoms(t)).map(|_| rng.gen_bool(0.5)).collect();
    EventMask::new(space, t, atoms).expect("stage is valid")
}

/// Random level inside `(lo, hi)`: uniform in `atan` coordinates over the
/// interval shrunk by 5% at each end, so infinite endpoints are handled.
pub fn random_level<S: Scalar, R: Rng>(rng: &mut R, lo: ExtReal<S>, hi: ExtReal<S>) -> S {
    let a = lo.get().as_f64().atan();
    let b = hi.get().as_f64().atan();
    let w = b - a;
    let u = rng.gen_range((a + 0.05 * w)..(b - 0.05 * w));
    S::lit(u.tan())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trees_respect_shape() {
        for seed in 0..200 {
            let mut rng = trial_rng(seed, 0);
            let stages = 2 + (seed as usize % 3);
            let s: Arc<FilteredSpace<f64>> = random_space(
                &mut rng,
                TreeShape {
                    stages,
                    max_leaves: 16,
                    max_branching: 3,
                },
            );
            assert_eq!(s.last_stage() + 1, stages);
            assert!(s.num_leaves() <= 16 && s.num_leaves() >= 2);
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<u32> = (0..4).map(|_| trial_rng(7, 3).gen()).collect();
        let b: Vec<u32> = (0..4).map(|_| trial_rng(7, 3).gen()).collect();
        assert_eq!(a, b);
        let c: u32 = trial_rng(7, 4).gen();
        assert_ne!(a[0], c);
    }
}
