//! Conditional and dynamic performance measures on finite filtered
//! probability spaces.
//!
//! The core is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix it to `f64`.

pub mod bisect;
pub mod dividends;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod lattice;
pub mod measures;
pub mod random;
pub mod risk;
pub mod scalar;

pub use error::{Error, Result};
pub use lattice::{EventMask, ExtReal, FilteredSpace, TVar, TreeNode, XVar};
pub use measures::{MeasureKind, MeasureSpec, PerformanceMeasure, UtilitySpec};
pub use scalar::Scalar;

pub type Real = ExtReal<f64>;
pub type Space = FilteredSpace<f64>;
pub type Var = XVar<f64>;
pub type StageVar = TVar<f64>;
pub type Measure = MeasureSpec<f64>;
pub type Utility = UtilitySpec<f64>;
