use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone)]
pub enum Error {
    #[error("invalid model: {0}")]
    Invalid(ValidationReport),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("argument {value} is outside the range of {what}")]
    Range { what: &'static str, value: f64 },

    #[error("no certified solution: {0}")]
    NoSolution(String),

    #[error("second-order condition violated at pi = {pi}: lhs {lhs} >= rhs {rhs}")]
    SocViolation { pi: f64, lhs: f64, rhs: f64 },

    #[error("first-order condition has no sign change on (0, 1)")]
    NoInteriorSolution,

    #[error("no threshold: {0}")]
    NoThreshold(String),

    #[error("endpoint regimes differ: {0} vs {1}")]
    CaseMismatch(String, String),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("model file: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}
