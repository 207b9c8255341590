//! Conditional performance measures and their axiom checker.

mod axioms;
mod spec;
mod utility;

pub use axioms::{check_axioms, check_scale_invariance, AxiomCheck, AxiomReport, AxiomWitness, ScaleReport};
pub use spec::{
    avar, evaluate, evaluate_flagged, Denominator, MeasureKind, MeasureSpec, PerformanceMeasure, RiskAversion,
    EPS_STRICT,
};
pub use utility::UtilitySpec;
