//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point} is not in the image of branch {branch}")]
    OutOfImage { branch: usize, point: f64 },

    #[error("cylinder word violates the Markov adjacency at position {position}")]
    Inadmissible { position: usize },

    #[error("moran cover scale must be positive, got {scale}")]
    ScaleTooCoarse { scale: f64 },

    #[error("orbit left the {delta}-neighbourhood of the neutral set at step {step}")]
    OrbitEscapes { step: usize, delta: f64 },

    #[error("fibre value exceeded the overflow ceiling {ceiling:.3e} at step {step}")]
    Overflow { step: usize, ceiling: f64 },

    #[error("operation needs {needed} cylinders, exceeding the budget {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },

    #[error("orbit of {point} hits the neutral set (point lies in R_P)")]
    HitsNeutralSet { point: f64 },

    #[error("did not converge within {limit} {what}")]
    NonConvergent { what: &'static str, limit: usize },

    #[error("certificate does not steer into the neutral set: {reason}")]
    BadCertificate { reason: String },

    #[error("pressure does not change sign on [{t_lo}, {t_hi}] (values {p_lo:.3e}, {p_hi:.3e})")]
    NoBracket { t_lo: f64, t_hi: f64, p_lo: f64, p_hi: f64 },

    #[error("box counting at r={scale} needs more than {budget} boxes")]
    ScaleTooFine { scale: f64, budget: usize },

    #[error("need at least {needed} records in the fit window, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
