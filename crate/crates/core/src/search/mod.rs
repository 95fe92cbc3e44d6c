//! Outer search over discrete assignments: exhaustive enumeration for small
//! instances and a memoized (1+1)-style mutation search for larger ones.
//! Every candidate is scored with optimal prices from the inner solve.

mod canonical;
mod exact;
mod heuristic;
mod partition;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{Assignment, Instance};
use crate::objective::{EpochHistory, EvaluationReport, Evaluator, GovernanceWeights};
use crate::pricing::price_configuration;

pub use canonical::{canonical_assignment, canonical_labels, canonicalize, CanonicalKey};
pub use exact::{enumerate_assignments, enumerate_keys, near_optimal_keys, solve_exact, KeyEnumerator};
pub use heuristic::solve_heuristic;
pub use partition::{build_partition_instance, has_perfect_split};

pub(crate) use exact::{check_cap, exhaustive_best};
pub(crate) use heuristic::search_keys;

/// Default guard on `|APP| + |OP|` for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Exact,
    #[default]
    Heuristic,
}

impl FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SearchMode::Exact),
            "heuristic" => Ok(SearchMode::Heuristic),
            other => Err(Error::InvalidParams(format!("unknown mode `{other}`, expected exact or heuristic"))),
        }
    }
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchMode::Exact => "exact",
            SearchMode::Heuristic => "heuristic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Maximum number of objective evaluations (heuristic mode).
    pub budget: usize,
    pub seed: u64,
    pub mode: SearchMode,
    /// Relative tolerance for membership in the near-optimal set.
    pub epsilon: f64,
    pub restarts: usize,
    /// Per-agent relabel probability; `None` means `1 / agents`.
    pub mutation_rate: Option<f64>,
    pub enumeration_cap: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            budget: 20_000,
            seed: 0,
            mode: SearchMode::Heuristic,
            epsilon: 1e-6,
            restarts: 8,
            mutation_rate: None,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            exec: Exec::default(),
        }
    }
}

impl SolverConfig {
    pub fn exact() -> Self {
        Self { mode: SearchMode::Exact, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidParams("budget must be positive".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParams("epsilon must be nonnegative".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParams("restarts must be positive".into()));
        }
        if let Some(r) = self.mutation_rate {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::InvalidParams(format!("mutation rate must lie in (0, 1], got {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Heuristic,
    WarmStart,
}

/// A priced feasible assignment and its evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub assignment: Assignment,
    pub key: CanonicalKey,
    pub report: EvaluationReport,
    pub evaluations_used: usize,
    pub provenance: Provenance,
    /// False when the best assignment found is the empty one.
    pub feasible_found: bool,
}

impl Solution {
    pub fn objective(&self) -> f64 {
        self.report.objective
    }
}

/// Values within this relative distance are treated as equal.
pub(crate) const VALUE_TIE_TOL: f64 = 1e-12;

pub(crate) fn values_tied(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= VALUE_TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Higher value wins; (near) ties go to the lower key.
pub(crate) fn better(a: (f64, &CanonicalKey), b: (f64, &CanonicalKey)) -> bool {
    if values_tied(a.0, b.0) {
        a.1.cmp(b.1) == Ordering::Less
    } else {
        a.0 > b.0
    }
}

/// Objective of a canonical key with optimal prices.
pub(crate) fn score_key(evaluator: &Evaluator<'_>, key: &CanonicalKey) -> f64 {
    let mut config = evaluator.configure_unchecked(key.decode(evaluator.instance().apps.len()));
    price_configuration(&mut config)
}

pub(crate) fn build_solution(
    evaluator: &Evaluator<'_>,
    key: CanonicalKey,
    evaluations_used: usize,
    provenance: Provenance,
) -> Solution {
    let mut config = evaluator.configure_unchecked(key.decode(evaluator.instance().apps.len()));
    price_configuration(&mut config);
    let report = config.report();
    let feasible_found = key.chain_count() > 0;
    Solution { assignment: config.into_assignment(), key, report, evaluations_used, provenance, feasible_found }
}

/// Dispatches on `config.mode`.
pub fn solve(
    instance: &Instance,
    history: Option<&EpochHistory>,
    weights: GovernanceWeights,
    config: &SolverConfig,
    warm_start: Option<&Assignment>,
) -> Result<Solution> {
    match config.mode {
        SearchMode::Exact => solve_exact(instance, history, weights, config),
        SearchMode::Heuristic => solve_heuristic(instance, history, weights, config, warm_start),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_scores_never_tie_with_finite_ones() {
        let (lo, hi) = (CanonicalKey::from_raw(vec![0, 0]), CanonicalKey::from_raw(vec![1, 1]));
        assert!(better((5.0, &hi), (f64::NEG_INFINITY, &lo)));
        assert!(!better((f64::NEG_INFINITY, &lo), (5.0, &hi)));
        assert!(better((f64::NEG_INFINITY, &lo), (f64::NEG_INFINITY, &hi)));
        assert!(better((1.0, &lo), (1.0 + 1e-14, &hi)));
    }
}
