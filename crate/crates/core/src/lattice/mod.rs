//! Finite filtered probability spaces and the conditional lattice calculus.

mod ext_real;
mod space;
mod var;

pub use ext_real::ExtReal;
pub use space::{FilteredSpace, TreeNode, PROB_SUM_TOL};
pub use var::{
    cond_expect, cond_expect_q, ess_inf_on_atoms, ess_sup_on_atoms, paste, weighted_mean, EventMask, TVar, XVar,
};
