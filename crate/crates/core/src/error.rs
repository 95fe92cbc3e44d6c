use thiserror::Error;

use crate::model::ValidationError;

/// Errors raised by the library. Analytical outcomes such as an infeasible
/// assignment are usually reported as data; these are contract violations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("assignment shape mismatch: {0}")]
    Shape(String),

    #[error("chain {chain} has no price interval: it needs at least one application and one operator")]
    UndefinedInterval { chain: usize },

    #[error("chain {chain} has an empty price interval [{lo}, {hi}]")]
    EmptyInterval { chain: usize, lo: f64, hi: f64 },

    #[error("assignment is infeasible ({violations} constraint violations)")]
    Infeasible { violations: usize },

    #[error("instance has {agents} agents, above the exhaustive enumeration cap of {cap}")]
    EnumerationCap { agents: usize, cap: usize },

    #[error("partition numbers must have an even sum, got {sum}")]
    OddPartitionSum { sum: u64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("instance failed validation: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidInstance(Vec<ValidationError>),

    #[error("history references unknown agent `{0}`")]
    UnknownAgent(String),

    #[error("drawn solution is not a member of the sample")]
    NotInSample,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
