use thiserror::Error;

/// Errors raised by construction and evaluation routines.
///
/// Property checkers never return these for a failed property; failures
/// are recorded in their reports instead.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("stage {stage} not in space (last stage is {last})")]
    StageOutOfRange { stage: usize, last: usize },

    #[error("variables live on different spaces")]
    SpaceMismatch,

    #[error("dimension mismatch: expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("atom {atom} at stage {stage} has zero conditional mass")]
    ZeroMassAtom { stage: usize, atom: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid utility: {0}")]
    InvalidUtility(String),

    #[error("level {z} outside the open interval ({lo}, {hi})")]
    LevelOutOfRange { z: f64, lo: f64, hi: f64 },

    #[error("measure is internally inconsistent: {0}")]
    Inconsistent(String),

    #[error("linear program failed: {0}")]
    Solver(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
