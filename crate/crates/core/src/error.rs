use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("integrand not finite at node {node} (x = {x}, value = {value})")]
    NonFinite { node: usize, x: f64, value: f64 },

    #[error("no bracketing: g({lo}) = {g_lo} and g({hi}) = {g_hi} have the same sign")]
    NoBracket { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },

    #[error("{0} is not absolutely continuous")]
    NotContinuous(String),

    #[error("non-invertible channel: {moment} diverges")]
    NonInvertible { moment: String },

    #[error("{family} needs full CSI but was queried under main CSI")]
    Capability { family: String },

    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}
