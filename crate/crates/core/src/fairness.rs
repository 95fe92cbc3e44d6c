//! Sampling of near-optimal assignments and the zero-sum application
//! compensation rule `comp_a = E[U_a] − U_a`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::objective::{EpochHistory, Evaluator, GovernanceWeights};
use crate::search::{
    build_solution, canonicalize, near_optimal_keys, solve_heuristic, CanonicalKey, Provenance, SearchMode, Solution,
    SolverConfig,
};

/// One distinct near-optimal solution and how often the runs produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMember {
    pub solution: Solution,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalSetSample {
    /// Distinct members in canonical key order.
    pub members: Vec<SampleMember>,
    pub runs: usize,
    pub epsilon: f64,
    pub best_objective: f64,
}

impl OptimalSetSample {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, key: &CanonicalKey) -> bool {
        self.members.iter().any(|m| &m.solution.key == key)
    }

    /// Draws one member uniformly at random.
    pub fn draw(&self, seed: u64) -> &Solution {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        &self.members[rng.random_range(0..self.members.len())].solution
    }
}

/// Threshold below the best value that still counts as near-optimal.
pub fn epsilon_slack(best: f64, epsilon: f64) -> f64 {
    (epsilon * best.abs()).max(1e-12)
}

/// Repeated randomized solves, deduplicated by canonical key.
///
/// Exact mode enumerates every near-optimal assignment once and lets each
/// run pick one uniformly. Heuristic mode reruns the search with a
/// different seed per run and keeps results within `epsilon` of the best.
pub fn sample_optimal_set(
    instance: &Instance,
    history: Option<&EpochHistory>,
    weights: GovernanceWeights,
    config: &SolverConfig,
    runs: usize,
) -> Result<OptimalSetSample> {
    if runs == 0 {
        return Err(Error::InvalidParams("runs must be at least 1".into()));
    }
    config.validate()?;
    let mut counts: BTreeMap<CanonicalKey, usize> = BTreeMap::new();
    let mut solutions: BTreeMap<CanonicalKey, Solution> = BTreeMap::new();
    match config.mode {
        SearchMode::Exact => {
            let optima = near_optimal_keys(instance, history, weights, config)?;
            let picks = config.exec.map_range(runs, |r| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(r as u64 + 1);
                rng.random_range(0..optima.len())
            });
            let evaluator = Evaluator::try_new(instance, history, weights)?;
            for i in picks {
                let key = optima[i].0.clone();
                *counts.entry(key.clone()).or_default() += 1;
                solutions.entry(key.clone()).or_insert_with(|| build_solution(&evaluator, key, 0, Provenance::Exact));
            }
        }
        SearchMode::Heuristic => {
            let results = config.exec.map_range(runs, |r| {
                let cfg = SolverConfig { seed: config.seed.wrapping_add(r as u64), ..config.clone() };
                solve_heuristic(instance, history, weights, &cfg, None)
            });
            for s in results {
                let s = s?;
                *counts.entry(s.key.clone()).or_default() += 1;
                solutions.entry(s.key.clone()).or_insert(s);
            }
        }
    }
    let best = solutions.values().map(Solution::objective).fold(f64::NEG_INFINITY, f64::max);
    let slack = epsilon_slack(best, config.epsilon);
    let members = solutions
        .into_iter()
        .filter(|(_, s)| s.objective() >= best - slack)
        .map(|(k, solution)| SampleMember { solution, count: counts[&k] })
        .collect();
    Ok(OptimalSetSample { members, runs, epsilon: config.epsilon, best_objective: best })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationMode {
    /// Uniform over distinct members.
    #[default]
    Uniform,
    /// Weighted by how often each member was produced.
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationRow {
    pub app_id: String,
    pub expected: f64,
    pub realized: f64,
    pub comp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationReport {
    pub drawn: String,
    pub rows: Vec<CompensationRow>,
}

impl CompensationReport {
    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.comp).sum()
    }

    /// CSV with columns `app_id,expected,realized,comp`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Expected minus realized application utility for the drawn member. The
/// utility is the stakeholder-level one (served gas in the core model).
pub fn compensation(sample: &OptimalSetSample, drawn: &Solution, mode: ExpectationMode) -> Result<CompensationReport> {
    if !sample.contains(&drawn.key) && !sample.contains(&canonicalize(&drawn.assignment)) {
        return Err(Error::NotInSample);
    }
    let total_weight: f64 = sample
        .members
        .iter()
        .map(|m| match mode {
            ExpectationMode::Uniform => 1.0,
            ExpectationMode::Frequency => m.count as f64,
        })
        .sum();
    let rows = drawn
        .report
        .app_utilities
        .iter()
        .enumerate()
        .map(|(a, u)| {
            let expected = sample
                .members
                .iter()
                .map(|m| {
                    let w = match mode {
                        ExpectationMode::Uniform => 1.0,
                        ExpectationMode::Frequency => m.count as f64,
                    };
                    w * m.solution.report.app_utilities[a].raw
                })
                .sum::<f64>()
                / total_weight;
            CompensationRow { app_id: u.id.clone(), expected, realized: u.raw, comp: expected - u.raw }
        })
        .collect();
    Ok(CompensationReport { drawn: drawn.key.to_string(), rows })
}
