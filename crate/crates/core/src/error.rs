//! Error type shared by every module of the crate.

use thiserror::Error;

use crate::solver::SolveOutcome;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not Hermitian (max |A - A^H| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    #[error("trace must be 1, got {trace}")]
    TraceNotOne { trace: f64 },

    #[error("map is not trace preserving (max deviation {deviation:e})")]
    NotTracePreserving { deviation: f64 },

    #[error("expected {expected} values for {what}, got {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("dimension {0} is not prime")]
    NotPrime(usize),

    #[error("parameters violate complete positivity: {0:?}")]
    CpViolation(Vec<f64>),

    #[error("POVM is invalid: {0}")]
    InvalidPovm(String),

    #[error("configuration {0} has zero shots")]
    ZeroShots(usize),

    #[error("missing frequencies for configuration {0}")]
    MissingFrequencies(usize),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("starting point is not strictly feasible: {0}")]
    InvalidInteriorPoint(String),

    #[error("Newton iteration did not converge at mu = {:e}", .0.stages.last().map_or(f64::NAN, |s| s.mu))]
    NotConverged(Box<SolveOutcome>),

    #[error("auxiliary stage {stage} is infeasible: {reason}")]
    InfeasibleStage { stage: usize, reason: String },

    #[error("need at least 2 repetitions for variance, got {0}")]
    InsufficientRepetitions(usize),

    #[error("unknown model id '{0}'")]
    UnknownModel(String),

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
