//! Risk measures induced by performance measures, and the inverse map.

mod checks;
mod dual;
mod entropic;
mod family;
mod induce;
mod simplex;

pub use checks::{closure_check, truncation_limit_check, validate_standard_family, ClosureReport, FamilyReport, PropertyCheck, TruncationReport};
pub use dual::{glr_dual_feasible, glr_dual_risk, penalty_lower_bound, DualMeasure, DualRisk, PenaltyProbe};
pub use entropic::{entropic_closed_form, entropic_log_level};
pub use family::{
    linear_grid, reconstruct, reconstruct_with, risk_curve, EntropicFamily, FnFamily, InducedFamily, LimitCheck, Provenance, Reconstruction,
    RiskCurve, StandardFamily, TOL_Z,
};
pub use induce::{check_level, induce_atom, induce_risk, induce_risk_tol, RiskPoint, TOL_C};
pub use simplex::{LinearProgram, LpSolution};
