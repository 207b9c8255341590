use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on the total leaf probability.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Finite filtered probability space: leaves with positive weights and,
/// for every stage `0..=T`, a partition of the leaves into atoms that
/// refines as the stage increases.
///
/// Leaves are stored in depth-first order, so every atom of every stage is
/// a contiguous range of leaf indices and the atoms of a later stage lying
/// inside an earlier atom are a contiguous range of atom indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSpace<S> {
    leaf_ids: Vec<String>,
    probs: Vec<S>,
    atoms: Vec<Vec<Range<usize>>>,
    atom_of: Vec<Vec<usize>>,
    parent: Vec<Vec<usize>>,
}

/// Node of a scenario tree, used to build spaces programmatically.
/// Children carry their conditional transition probability.
#[derive(Debug, Clone)]
pub struct TreeNode<S> {
    pub label: String,
    pub children: Vec<(S, TreeNode<S>)>,
}

impl<S> TreeNode<S> {
    pub fn leaf(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            children: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<(S, TreeNode<S>)>) -> Self {
        Self {
            label: label.into(),
            children,
        }
    }

    fn depth(&self) -> Option<usize> {
        if self.children.is_empty() {
            return Some(0);
        }
        let mut d = None;
        for (_, c) in &self.children {
            let cd = c.depth()? + 1;
            match d {
                None => d = Some(cd),
                Some(x) if x != cd => return None,
                _ => {}
            }
        }
        d
    }
}

impl<S: Scalar> FilteredSpace<S> {
    /// Builds a space from leaves `(id, probability)` and one partition per
    /// stage, each atom given as a list of indices into `leaves`.
    pub fn new(leaves: Vec<(String, S)>, partitions: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let n = leaves.len();
        if n == 0 {
            return Err(Error::InvalidSpace("no leaves".into()));
        }
        if partitions.is_empty() {
            return Err(Error::InvalidSpace("no stages".into()));
        }
        let mut seen = HashMap::new();
        for (i, (id, p)) in leaves.iter().enumerate() {
            if seen.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidSpace(format!("duplicate leaf id {id:?}")));
            }
            if !(p.is_finite() && *p > S::zero()) {
                return Err(Error::InvalidSpace(format!(
                    "leaf {id:?} has probability {p}; leaf probabilities must be > 0"
                )));
            }
        }
        let total: S = leaves.iter().map(|(_, p)| *p).sum();
        if (total - S::one()).abs() > S::lit(PROB_SUM_TOL).max(S::epsilon() * S::lit(4.0 * n as f64)) {
            return Err(Error::InvalidSpace(format!(
                "leaf probabilities sum to {total}, expected 1"
            )));
        }

        // atom membership per stage, in input indexing
        let mut member = Vec::with_capacity(partitions.len());
        for (t, part) in partitions.iter().enumerate() {
            let mut of = vec![usize::MAX; n];
            for (a, atom) in part.iter().enumerate() {
                if atom.is_empty() {
                    return Err(Error::InvalidSpace(format!("empty atom {a} at stage {t}")));
                }
                for &leaf in atom {
                    if leaf >= n {
                        return Err(Error::InvalidSpace(format!(
                            "atom {a} at stage {t} references unknown leaf index {leaf}"
                        )));
                    }
                    if of[leaf] != usize::MAX {
                        return Err(Error::InvalidSpace(format!(
                            "leaf {:?} belongs to more than one atom at stage {t}",
                            leaves[leaf].0
                        )));
                    }
                    of[leaf] = a;
                }
            }
            if let Some(leaf) = of.iter().position(|&a| a == usize::MAX) {
                return Err(Error::InvalidSpace(format!(
                    "leaf {:?} belongs to no atom at stage {t}",
                    leaves[leaf].0
                )));
            }
            member.push(of);
        }
        if partitions[0].len() != 1 {
            return Err(Error::InvalidSpace("stage 0 must be the single root atom".into()));
        }
        let last = partitions.len() - 1;
        if partitions[last].len() != n {
            return Err(Error::InvalidSpace(format!(
                "stage {last} atoms must be the singleton leaves"
            )));
        }
        // refinement: an atom at t+1 lies inside one atom at t
        let mut parent_in = Vec::with_capacity(partitions.len());
        parent_in.push(vec![0usize; 1]);
        for t in 1..partitions.len() {
            let mut par = Vec::with_capacity(partitions[t].len());
            for (a, atom) in partitions[t].iter().enumerate() {
                let p = member[t - 1][atom[0]];
                if atom.iter().any(|&l| member[t - 1][l] != p) {
                    return Err(Error::InvalidSpace(format!(
                        "atom {a} at stage {t} does not refine stage {}",
                        t - 1
                    )));
                }
                par.push(p);
            }
            parent_in.push(par);
        }

        // depth-first leaf order; children ordered by first input leaf
        let mut children: Vec<Vec<Vec<usize>>> = Vec::with_capacity(partitions.len());
        for t in 0..partitions.len() {
            let mut ch = vec![Vec::new(); partitions[t].len()];
            if t < last {
                let mut kids: Vec<usize> = (0..partitions[t + 1].len()).collect();
                kids.sort_by_key(|&a| partitions[t + 1][a].iter().min().copied());
                for a in kids {
                    ch[parent_in[t + 1][a]].push(a);
                }
            }
            children.push(ch);
        }
        let mut order = Vec::with_capacity(n);
        let mut atom_order: Vec<Vec<usize>> = vec![Vec::new(); partitions.len()];
        fn visit(
            t: usize,
            a: usize,
            last: usize,
            children: &[Vec<Vec<usize>>],
            partitions: &[Vec<Vec<usize>>],
            order: &mut Vec<usize>,
            atom_order: &mut [Vec<usize>],
        ) {
            atom_order[t].push(a);
            if t == last {
                order.push(partitions[t][a][0]);
                return;
            }
            for &c in &children[t][a] {
                visit(t + 1, c, last, children, partitions, order, atom_order);
            }
        }
        visit(0, 0, last, &children, &partitions, &mut order, &mut atom_order);

        let mut new_index = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let leaf_ids: Vec<String> = order.iter().map(|&o| leaves[o].0.clone()).collect();
        let probs: Vec<S> = order.iter().map(|&o| leaves[o].1).collect();

        let mut atoms = Vec::with_capacity(partitions.len());
        let mut atom_of = Vec::with_capacity(partitions.len());
        let mut new_atom_index: Vec<Vec<usize>> = Vec::with_capacity(partitions.len());
        for t in 0..partitions.len() {
            let mut ranges = Vec::with_capacity(partitions[t].len());
            let mut idx = vec![0usize; partitions[t].len()];
            let mut of = vec![0usize; n];
            for (k, &a) in atom_order[t].iter().enumerate() {
                idx[a] = k;
                let lo = partitions[t][a].iter().map(|&l| new_index[l]).min().unwrap();
                let hi = lo + partitions[t][a].len();
                for l in lo..hi {
                    of[l] = k;
                }
                ranges.push(lo..hi);
            }
            atoms.push(ranges);
            atom_of.push(of);
            new_atom_index.push(idx);
        }
        let mut parent = vec![vec![0usize; 1]];
        for t in 1..partitions.len() {
            let mut par = vec![0usize; partitions[t].len()];
            for (a, &p) in parent_in[t].iter().enumerate() {
                par[new_atom_index[t][a]] = new_atom_index[t - 1][p];
            }
            parent.push(par);
        }

        Ok(Self {
            leaf_ids,
            probs,
            atoms,
            atom_of,
            parent,
        })
    }

    /// Builds a space from a scenario tree whose leaves all sit at the
    /// same depth. Leaf ids are the labels along the path joined by `.`
    /// (root label omitted), or the leaf label alone when the tree has one
    /// step.
    pub fn from_tree(root: &TreeNode<S>) -> Result<Self> {
        let depth = root
            .depth()
            .ok_or_else(|| Error::InvalidSpace("tree leaves at different depths".into()))?;
        let mut leaves = Vec::new();
        let mut partitions: Vec<Vec<Vec<usize>>> = vec![Vec::new(); depth + 1];
        fn walk<S: Scalar>(
            node: &TreeNode<S>,
            t: usize,
            prob: S,
            path: &str,
            leaves: &mut Vec<(String, S)>,
            partitions: &mut [Vec<Vec<usize>>],
        ) -> Result<Vec<usize>> {
            if node.children.is_empty() {
                let i = leaves.len();
                leaves.push((path.to_string(), prob));
                partitions[t].push(vec![i]);
                return Ok(vec![i]);
            }
            let mut all = Vec::new();
            for (p, child) in &node.children {
                if !(*p > S::zero()) {
                    return Err(Error::InvalidSpace(format!(
                        "transition probability {p} into {:?} is not positive",
                        child.label
                    )));
                }
                let sub = if path.is_empty() {
                    child.label.clone()
                } else {
                    format!("{path}.{}", child.label)
                };
                all.extend(walk(child, t + 1, prob * *p, &sub, leaves, partitions)?);
            }
            partitions[t].push(all.clone());
            Ok(all)
        }
        walk(root, 0, S::one(), "", &mut leaves, &mut partitions)?;
        // renormalise away rounding in products of transition probabilities
        let total: S = leaves.iter().map(|(_, p)| *p).sum();
        if (total - S::one()).abs() > S::lit(1e-9).max(S::epsilon() * S::lit(64.0)) {
            return Err(Error::InvalidSpace(format!(
                "transition probabilities give total mass {total}"
            )));
        }
        for (_, p) in leaves.iter_mut() {
            *p = *p / total;
        }
        Self::new(leaves, partitions)
    }

    /// One fair coin flip: leaves `h`, `t`, stages `{0, 1}`.
    pub fn coin2() -> Self {
        let half = S::half();
        Self::from_tree(&TreeNode::node(
            "",
            vec![(half, TreeNode::leaf("h")), (half, TreeNode::leaf("t"))],
        ))
        .expect("coin2 is valid")
    }

    /// Recombining-free binomial tree with `steps` steps and up-probability
    /// `p_up`; leaf ids are `u`/`d` paths joined by `.`.
    pub fn binomial(steps: usize, p_up: S) -> Result<Self> {
        fn build<S: Scalar>(label: &str, left: usize, p: S) -> TreeNode<S> {
            if left == 0 {
                return TreeNode::leaf(label);
            }
            TreeNode::node(
                label,
                vec![
                    (p, build("u", left - 1, p)),
                    (S::one() - p, build("d", left - 1, p)),
                ],
            )
        }
        if !(p_up > S::zero() && p_up < S::one()) {
            return Err(Error::InvalidSpace(format!("up-probability {p_up} not in (0,1)")));
        }
        Self::from_tree(&build("", steps, p_up))
    }

    /// Last stage `T`.
    #[inline]
    pub fn last_stage(&self) -> usize {
        self.atoms.len() - 1
    }

    /// Stages `0..=T`.
    pub fn times(&self) -> Range<usize> {
        0..self.atoms.len()
    }

    #[inline]
    pub fn num_leaves(&self) -> usize {
        self.probs.len()
    }

    pub fn leaf_ids(&self) -> &[String] {
        &self.leaf_ids
    }

    pub fn leaf_index(&self, id: &str) -> Option<usize> {
        self.leaf_ids.iter().position(|l| l == id)
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn check_stage(&self, t: usize) -> Result<()> {
        if t > self.last_stage() {
            Err(Error::StageOutOfRange {
                stage: t,
                last: self.last_stage(),
            })
        } else {
            Ok(())
        }
    }

    /// Atoms of stage `t` as leaf ranges. Panics on an invalid stage.
    #[inline]
    pub fn atoms(&self, t: usize) -> &[Range<usize>] {
        &self.atoms[t]
    }

    #[inline]
    pub fn num_atoms(&self, t: usize) -> usize {
        self.atoms[t].len()
    }

    /// Index of the stage-`t` atom containing `leaf`.
    #[inline]
    pub fn atom_of(&self, t: usize, leaf: usize) -> usize {
        self.atom_of[t][leaf]
    }

    /// Stage-`t` atom containing stage-`u` atom `a`, `t <= u`.
    pub fn ancestor(&self, u: usize, a: usize, t: usize) -> usize {
        let leaf = self.atoms[u][a].start;
        self.atom_of[t][leaf]
    }

    /// Parent atom at stage `t-1` of atom `a` at stage `t >= 1`.
    pub fn parent(&self, t: usize, a: usize) -> usize {
        self.parent[t][a]
    }

    /// Indices of stage-`u` atoms contained in stage-`t` atom `a`, `t <= u`.
    pub fn sub_atoms(&self, t: usize, a: usize, u: usize) -> Range<usize> {
        let r = &self.atoms[t][a];
        self.atom_of[u][r.start]..self.atom_of[u][r.end - 1] + 1
    }

    /// Probability of stage-`t` atom `a`.
    pub fn atom_prob(&self, t: usize, a: usize) -> S {
        self.probs[self.atoms[t][a].clone()].iter().copied().sum()
    }

    /// Probabilities of the leaves of atom `a` conditional on that atom.
    pub fn conditional_probs(&self, t: usize, a: usize) -> Vec<S> {
        let r = self.atoms[t][a].clone();
        let mass = self.atom_prob(t, a);
        self.probs[r].iter().map(|p| *p / mass).collect()
    }

    /// Stable identifier `"t:k"` of atom `k` at stage `t`.
    pub fn atom_id(&self, t: usize, a: usize) -> String {
        format!("{t}:{a}")
    }

    /// Resolves an atom id (`"t:k"`) or a leaf id to the stage-`t` atom.
    pub fn resolve_atom(&self, t: usize, key: &str) -> Result<usize> {
        if let Some((ts, ks)) = key.split_once(':') {
            if let (Ok(tt), Ok(k)) = (ts.parse::<usize>(), ks.parse::<usize>()) {
                if tt != t {
                    return Err(Error::InvalidValue(format!(
                        "atom id {key:?} belongs to stage {tt}, not {t}"
                    )));
                }
                if k >= self.num_atoms(t) {
                    return Err(Error::InvalidValue(format!("unknown atom id {key:?}")));
                }
                return Ok(k);
            }
        }
        let leaf = self
            .leaf_index(key)
            .ok_or_else(|| Error::InvalidValue(format!("unknown leaf or atom id {key:?}")))?;
        Ok(self.atom_of(t, leaf))
    }

    /// Partitions as leaf-index lists, in the stored (depth-first) order.
    pub fn partitions(&self) -> Vec<Vec<Vec<usize>>> {
        self.atoms
            .iter()
            .map(|stage| stage.iter().map(|r| r.clone().collect()).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaves(ps: &[f64]) -> Vec<(String, f64)> {
        ps.iter().enumerate().map(|(i, p)| (format!("w{i}"), *p)).collect()
    }

    #[test]
    fn coin2_shape() {
        let s = FilteredSpace::<f64>::coin2();
        assert_eq!(s.last_stage(), 1);
        assert_eq!(s.num_atoms(0), 1);
        assert_eq!(s.num_atoms(1), 2);
        assert_eq!(s.leaf_ids(), ["h", "t"]);
        assert_eq!(s.conditional_probs(0, 0), vec![0.5, 0.5]);
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let err = FilteredSpace::new(leaves(&[0.5, 0.4]), vec![vec![vec![0, 1]], vec![vec![0], vec![1]]]);
        assert!(matches!(err, Err(Error::InvalidSpace(m)) if m.contains("sum")));
    }

    #[test]
    fn zero_probability_rejected() {
        let err = FilteredSpace::new(leaves(&[1.0, 0.0]), vec![vec![vec![0, 1]], vec![vec![0], vec![1]]]);
        assert!(err.is_err());
    }

    #[test]
    fn non_refining_partition_rejected() {
        let parts = vec![
            vec![vec![0, 1, 2, 3]],
            vec![vec![0, 1], vec![2, 3]],
            vec![vec![0, 2], vec![1, 3]],
            vec![vec![0], vec![1], vec![2], vec![3]],
        ];
        let err = FilteredSpace::new(leaves(&[0.25; 4]), parts);
        assert!(matches!(err, Err(Error::InvalidSpace(m)) if m.contains("refine")));
    }

    #[test]
    fn leaf_in_two_atoms_rejected() {
        let parts = vec![vec![vec![0, 1]], vec![vec![0], vec![0, 1]]];
        assert!(FilteredSpace::new(leaves(&[0.5, 0.5]), parts).is_err());
    }

    #[test]
    fn interleaved_input_becomes_contiguous() {
        // stage-1 atoms {0,2} and {1,3}
        let parts = vec![
            vec![vec![0, 1, 2, 3]],
            vec![vec![1, 3], vec![0, 2]],
            vec![vec![0], vec![1], vec![2], vec![3]],
        ];
        let s = FilteredSpace::new(leaves(&[0.1, 0.2, 0.3, 0.4]), parts).unwrap();
        assert_eq!(s.leaf_ids(), ["w0", "w2", "w1", "w3"]);
        assert_eq!(s.atoms(1), &[0..2, 2..4]);
        assert_eq!(s.sub_atoms(1, 1, 2), 2..4);
        assert_eq!(s.parent(2, 3), 1);
        assert!((s.atom_prob(1, 0) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn binomial_two_steps() {
        let s = FilteredSpace::<f64>::binomial(2, 0.5).unwrap();
        assert_eq!(s.num_leaves(), 4);
        assert_eq!(s.leaf_ids(), ["u.u", "u.d", "d.u", "d.d"]);
        assert_eq!(s.resolve_atom(1, "d.u").unwrap(), 1);
        assert_eq!(s.resolve_atom(1, "1:0").unwrap(), 0);
        assert!(s.resolve_atom(1, "2:0").is_err());
    }
}
