use std::fmt;

use crate::kernels::KernelFamily;

/// Modeling assumptions a kernel/hyper-parameter combination must satisfy
/// before the trend indices are well defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Assumption {
    /// Mean-square differentiability of the latent process up to the order the
    /// requested index needs.
    A3,
    /// Non-degeneracy of the trend and of its joint law with the curvature.
    A4,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::A3 => write!(f, "A3"),
            Assumption::A4 => write!(f, "A4"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("A3 violated: {family} kernel does not admit derivative order ({order_s},{order_t})")]
    InadmissibleOrder {
        family: KernelFamily,
        order_s: usize,
        order_t: usize,
    },

    #[error("{assumption} violated: {detail}")]
    Assumption {
        assumption: Assumption,
        detail: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("value {value} at index {index} is outside the domain of the {transform} transform")]
    Domain {
        index: usize,
        value: f64,
        transform: &'static str,
    },

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("sampler failed: {0}")]
    Sampler(String),

    #[error("insufficient draws: {0}")]
    InsufficientDraws(String),
}

impl Error {
    pub fn assumption(assumption: Assumption, detail: impl Into<String>) -> Self {
        Error::Assumption {
            assumption,
            detail: detail.into(),
        }
    }

    /// The violated modeling assumption, if this error signals one.
    pub fn violated_assumption(&self) -> Option<Assumption> {
        match self {
            Error::InadmissibleOrder { .. } => Some(Assumption::A3),
            Error::Assumption { assumption, .. } => Some(*assumption),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
