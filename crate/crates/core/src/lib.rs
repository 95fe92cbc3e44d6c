//! Ephemeral chain formation: applications and operators are partitioned
//! into chains with per-chain gas prices, and configurations are ranked by a
//! governance-weighted blend of application, operator and system utility.
//!
//! The crate covers the core model and its extensions, bilevel price
//! optimization, exact and heuristic configuration search, near-optimal
//! set sampling with compensation, misalignment analysis and a multi-epoch
//! simulation loop.

// Negated comparisons reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod epochs;
pub mod error;
pub mod exec;
pub mod fairness;
pub mod instances;
pub mod misalignment;
pub mod model;
pub mod objective;
pub mod pricing;
pub mod search;
pub mod sweep;

pub use error::{Error, Result};
pub use exec::Exec;
pub use model::{Application, Assignment, Instance, Operator};
pub use objective::{EvaluationReport, Evaluator, GovernanceWeights};
pub use search::{solve, SearchMode, Solution, SolverConfig};
