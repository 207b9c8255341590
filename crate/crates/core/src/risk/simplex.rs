//! Dense two-phase simplex with Bland's rule.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `maximize c·x` subject to `a_le x <= b_le`, `a_eq x = b_eq`, `x >= 0`,
/// with `b_le >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram<S> {
    pub c: Vec<S>,
    pub a_le: Vec<Vec<S>>,
    pub b_le: Vec<S>,
    pub a_eq: Vec<Vec<S>>,
    pub b_eq: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct LpSolution<S> {
    pub x: Vec<S>,
    pub value: S,
}

struct Tableau<S> {
    rows: Vec<Vec<S>>,
    basis: Vec<usize>,
    width: usize,
}

impl<S: Scalar> Tableau<S> {
    fn pivot(&mut self, r: usize, col: usize) {
        let w = self.width;
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v = *v / p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != S::zero() {
                for j in 0..=w {
                    row[j] = row[j] - f * pivot_row[j];
                }
            }
        }
        self.basis[r] = col;
    }

    /// Maximizes `obj·x` over the current feasible basis using columns
    /// `allowed`; returns `Ok(false)` if unbounded.
    fn optimize(&mut self, obj: &[S], allowed: &[bool], eps: S) -> Result<bool> {
        let w = self.width;
        let max_iter = 50_000;
        for _ in 0..max_iter {
            // reduced costs: obj_B B^{-1} A_j − obj_j
            let entering = (0..w).find(|&j| {
                allowed[j] && !self.basis.contains(&j) && {
                    let mut d = -obj[j];
                    for (row, &b) in self.rows.iter().zip(&self.basis) {
                        d = d + obj[b] * row[j];
                    }
                    d < -eps
                }
            });
            let Some(col) = entering else {
                return Ok(true);
            };
            let mut best: Option<(S, usize, usize)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if row[col] > eps {
                    let ratio = row[w] / row[col];
                    let better = match best {
                        None => true,
                        Some((br, _, bb)) => ratio < br - eps || (ratio <= br + eps && self.basis[r] < bb),
                    };
                    if better {
                        best = Some((ratio, r, self.basis[r]));
                    }
                }
            }
            let Some((_, r, _)) = best else {
                return Ok(false);
            };
            self.pivot(r, col);
        }
        Err(Error::Solver("iteration limit reached".into()))
    }
}

impl<S: Scalar> LinearProgram<S> {
    pub fn solve(&self) -> Result<LpSolution<S>> {
        let n = self.c.len();
        let m_le = self.a_le.len();
        let m_eq = self.a_eq.len();
        if self.b_le.len() != m_le || self.b_eq.len() != m_eq {
            return Err(Error::Solver("right-hand side length mismatch".into()));
        }
        if self.a_le.iter().chain(&self.a_eq).any(|r| r.len() != n) {
            return Err(Error::Solver("constraint row length mismatch".into()));
        }
        if self.b_le.iter().any(|b| *b < S::zero()) {
            return Err(Error::Solver("negative right-hand side in an inequality row".into()));
        }
        let eps = S::epsilon() * S::lit(1e4);
        // columns: originals, slacks, artificials, then rhs
        let width = n + m_le + m_eq;
        let mut rows = Vec::with_capacity(m_le + m_eq);
        let mut basis = Vec::with_capacity(m_le + m_eq);
        for (i, (a, b)) in self.a_le.iter().zip(&self.b_le).enumerate() {
            let mut row = vec![S::zero(); width + 1];
            row[..n].copy_from_slice(a);
            row[n + i] = S::one();
            row[width] = *b;
            rows.push(row);
            basis.push(n + i);
        }
        for (i, (a, b)) in self.a_eq.iter().zip(&self.b_eq).enumerate() {
            let sign = if *b < S::zero() { -S::one() } else { S::one() };
            let mut row = vec![S::zero(); width + 1];
            for (dst, src) in row[..n].iter_mut().zip(a) {
                *dst = *src * sign;
            }
            row[n + m_le + i] = S::one();
            row[width] = *b * sign;
            rows.push(row);
            basis.push(n + m_le + i);
        }
        let mut tab = Tableau { rows, basis, width };

        if m_eq > 0 {
            let mut phase1 = vec![S::zero(); width];
            for v in phase1[n + m_le..].iter_mut() {
                *v = -S::one();
            }
            let all = vec![true; width];
            tab.optimize(&phase1, &all, eps)?;
            let infeas: S = tab
                .rows
                .iter()
                .zip(&tab.basis)
                .filter(|(_, &b)| b >= n + m_le)
                .map(|(r, _)| r[width])
                .sum();
            if infeas > eps.sqrt() {
                return Err(Error::Solver("linear program is infeasible".into()));
            }
            // drive remaining artificials out of the basis where possible
            for r in 0..tab.rows.len() {
                if tab.basis[r] >= n + m_le {
                    if let Some(col) = (0..n + m_le).find(|&j| tab.rows[r][j].abs() > eps && !tab.basis.contains(&j)) {
                        tab.pivot(r, col);
                    }
                }
            }
        }
        let mut obj = vec![S::zero(); width];
        obj[..n].copy_from_slice(&self.c);
        let allowed: Vec<bool> = (0..width).map(|j| j < n + m_le).collect();
        if !tab.optimize(&obj, &allowed, eps)? {
            return Err(Error::Solver("linear program is unbounded".into()));
        }
        let mut x = vec![S::zero(); n];
        for (row, &b) in tab.rows.iter().zip(&tab.basis) {
            if b < n {
                x[b] = row[width];
            }
        }
        let value = x.iter().zip(&self.c).map(|(a, b)| *a * *b).sum();
        Ok(LpSolution { x, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let lp = LinearProgram {
            c: vec![3.0, 5.0],
            a_le: vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            b_le: vec![4.0, 12.0, 18.0],
            a_eq: vec![],
            b_eq: vec![],
        };
        let s = lp.solve().unwrap();
        assert!((s.value - 36.0_f64).abs() < 1e-12);
        assert!((s.x[0] - 2.0_f64).abs() < 1e-12 && (s.x[1] - 6.0_f64).abs() < 1e-12);
    }

    #[test]
    fn equality_and_infeasibility() {
        // max x - y, x + y = 1 -> 1
        let lp = LinearProgram {
            c: vec![1.0, -1.0],
            a_le: vec![],
            b_le: vec![],
            a_eq: vec![vec![1.0, 1.0]],
            b_eq: vec![1.0],
        };
        assert!((lp.solve().unwrap().value - 1.0_f64).abs() < 1e-12);
        let bad = LinearProgram {
            c: vec![1.0],
            a_le: vec![vec![1.0]],
            b_le: vec![1.0],
            a_eq: vec![vec![1.0]],
            b_eq: vec![2.0],
        };
        assert!(bad.solve().is_err());
    }

    #[test]
    fn unbounded_detected() {
        let lp = LinearProgram {
            c: vec![1.0],
            a_le: vec![],
            b_le: vec![],
            a_eq: vec![],
            b_eq: vec![],
        };
        assert!(lp.solve().is_err());
    }
}
