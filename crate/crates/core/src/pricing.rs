//! Inner solve of the bilevel problem: optimal clearing price per chain for
//! a fixed assignment.
//!
//! For a fixed assignment the objective separates over chains and, on each
//! chain, is piecewise linear in the price. Its maximum therefore sits at an
//! interval end or at a kink. Kinks come from the fee-degradation `max{0,·}`
//! term and from normalization clamps (the latter never bind under the
//! derived default bounds).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Assignment, Instance, PriceInterval};
use crate::objective::{Configuration, EpochHistory, Evaluator, GovernanceWeights, PriceMode};

/// Relative tolerance under which two candidate values count as tied.
pub const PRICE_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceSolveMode {
    Affine,
    Piecewise,
    MidRange,
}

/// One chain's price subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainPriceProblem {
    pub chain: usize,
    pub interval: PriceInterval,
    /// Slope of the chain's objective contribution between the interval ends.
    pub affine_coeff: f64,
    /// Sorted kink prices strictly inside the interval.
    pub breakpoints: Vec<f64>,
    pub mode: PriceSolveMode,
}

impl ChainPriceProblem {
    pub fn mid_range(chain: usize, interval: PriceInterval) -> Self {
        Self { chain, interval, affine_coeff: 0.0, breakpoints: Vec::new(), mode: PriceSolveMode::MidRange }
    }
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= PRICE_TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Midpoint of the lowest application cap and the highest operator floor.
pub fn mid_range_price(interval: PriceInterval) -> f64 {
    (interval.lo + interval.hi) / 2.0
}

/// Optimal price for one chain. `value` evaluates the objective at a price
/// and is only consulted in piecewise mode. Ties resolve to the higher price.
pub fn optimal_chain_price(problem: &ChainPriceProblem, mut value: impl FnMut(f64) -> f64) -> Result<f64> {
    let PriceInterval { lo, hi } = problem.interval;
    if problem.interval.is_empty() {
        return Err(Error::EmptyInterval { chain: problem.chain, lo, hi });
    }
    Ok(match problem.mode {
        PriceSolveMode::MidRange => mid_range_price(problem.interval),
        PriceSolveMode::Affine => {
            if problem.affine_coeff < 0.0 {
                lo
            } else {
                hi
            }
        }
        PriceSolveMode::Piecewise => {
            let mut best_p = hi;
            let mut best_v = value(hi);
            for &p in problem.breakpoints.iter().rev().chain(std::iter::once(&lo)) {
                let v = value(p);
                if v > best_v && !tied(v, best_v) {
                    best_p = p;
                    best_v = v;
                }
            }
            best_p
        }
    })
}

/// Builds the subproblem for `chain` given the configuration's other prices.
pub fn chain_problem(config: &Configuration<'_>, chain: usize) -> Result<ChainPriceProblem> {
    let view = &config.views()[config.view_index(chain)];
    let interval = view.price_interval.ok_or(Error::UndefinedInterval { chain })?;
    if interval.is_empty() {
        return Err(Error::EmptyInterval { chain, lo: interval.lo, hi: interval.hi });
    }
    if config.evaluator().instance().extension_config.price_mode == PriceMode::MidRange {
        return Ok(ChainPriceProblem::mid_range(chain, interval));
    }
    let mut prices = config.prices().to_vec();
    let mut at = |p: f64| {
        prices[chain] = p;
        config.objective_at(&prices)
    };
    let width = interval.width();
    let affine_coeff = if width > 0.0 { (at(interval.hi) - at(interval.lo)) / width } else { 0.0 };
    let mut breakpoints: Vec<f64> =
        config.price_kinks(chain).into_iter().filter(|p| *p > interval.lo && *p < interval.hi).collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    let mode = if breakpoints.is_empty() { PriceSolveMode::Affine } else { PriceSolveMode::Piecewise };
    // Round-off can make a flat chain look slightly sloped; treat it as a tie.
    let affine_coeff = if tied(at(interval.hi), at(interval.lo)) { 0.0 } else { affine_coeff };
    Ok(ChainPriceProblem { chain, interval, affine_coeff, breakpoints, mode })
}

/// Sets every two-sided chain to its optimal price in place and returns the
/// objective. One-sided chains are priced at 0. Structurally infeasible
/// configurations are left at interval ends and score the sentinel.
pub fn price_configuration(config: &mut Configuration<'_>) -> f64 {
    let mut prices = config.prices().to_vec();
    let chains: Vec<(usize, Option<PriceInterval>)> =
        config.views().iter().map(|v| (v.chain_id, v.price_interval)).collect();
    for &(c, iv) in &chains {
        prices[c] = match iv {
            Some(iv) if !iv.is_empty() => iv.hi,
            Some(iv) => iv.lo,
            None => 0.0,
        };
    }
    config.set_prices(&prices);
    if !config.is_feasible() {
        return config.objective();
    }
    for &(c, iv) in &chains {
        if iv.is_none() {
            continue;
        }
        let problem = chain_problem(config, c).expect("feasible chain has a nonempty interval");
        let mut trial = prices.clone();
        let p = optimal_chain_price(&problem, |p| {
            trial[c] = p;
            config.objective_at(&trial)
        })
        .expect("interval checked above");
        prices[c] = p;
        config.set_prices(&prices);
    }
    config.objective()
}

/// Optimal prices for a fixed assignment, indexed by chain label.
pub fn solve_all_prices(
    instance: &Instance,
    assignment: &Assignment,
    history: Option<&EpochHistory>,
    weights: GovernanceWeights,
) -> Result<Vec<f64>> {
    let evaluator = Evaluator::try_new(instance, history, weights)?;
    let mut config = evaluator.configure(assignment)?;
    for v in config.views() {
        if let Some(iv) = v.price_interval {
            if iv.is_empty() {
                return Err(Error::EmptyInterval { chain: v.chain_id, lo: iv.lo, hi: iv.hi });
            }
        }
    }
    if !config.is_feasible() {
        return Err(Error::Infeasible { violations: config.structural_violations().len() });
    }
    price_configuration(&mut config);
    Ok(config.prices().to_vec())
}
