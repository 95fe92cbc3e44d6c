//! Utilities, extension terms, min-max normalization and the
//! governance-weighted global objective.
//!
//! The scalar objective for one assignment is
//!
//! ```text
//! λ_app · mean_a U_final(a) + λ_op · mean_o Norm(U_final(o)) + λ_sys · U_sys
//! ```
//!
//! where every term is normalized into `[0, 1]`. With all extensions at
//! their neutral settings this is the plain weighted sum of normalized base
//! utilities.

mod evaluator;
mod history;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Assignment, ChainView, Instance, ValidationError, Violation};

pub use evaluator::{AppTerms, Configuration, Evaluator, OpTerms, SysTerms};
pub use history::{downtime_costs, DowntimeReport, EpochHistory};

/// Governance weights `(λ_app, λ_op, λ_sys)` on the probability simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GovernanceWeights {
    pub lambda_app: f64,
    pub lambda_op: f64,
    pub lambda_sys: f64,
}

impl GovernanceWeights {
    pub fn new(lambda_app: f64, lambda_op: f64, lambda_sys: f64) -> Result<Self> {
        let w = Self { lambda_app, lambda_op, lambda_sys };
        let parts = [lambda_app, lambda_op, lambda_sys];
        if parts.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (w.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "governance weights must be nonnegative and sum to 1, got ({lambda_app}, {lambda_op}, {lambda_sys})"
            )));
        }
        Ok(w)
    }

    pub const APP: Self = Self { lambda_app: 1.0, lambda_op: 0.0, lambda_sys: 0.0 };
    pub const OP: Self = Self { lambda_app: 0.0, lambda_op: 1.0, lambda_sys: 0.0 };
    pub const SYS: Self = Self { lambda_app: 0.0, lambda_op: 0.0, lambda_sys: 1.0 };

    pub fn sum(&self) -> f64 {
        self.lambda_app + self.lambda_op + self.lambda_sys
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.lambda_app, self.lambda_op, self.lambda_sys]
    }
}

impl Default for GovernanceWeights {
    fn default() -> Self {
        Self { lambda_app: 1.0 / 3.0, lambda_op: 1.0 / 3.0, lambda_sys: 1.0 / 3.0 }
    }
}

impl FromStr for GovernanceWeights {
    type Err = Error;

    /// Parses `"a,o,s"`; each entry is a decimal or a fraction like `1/3`.
    fn from_str(s: &str) -> Result<Self> {
        let entry = |p: &str| -> Option<f64> {
            match p.trim().split_once('/') {
                Some((n, d)) => Some(n.trim().parse::<f64>().ok()? / d.trim().parse::<f64>().ok()?),
                None => p.trim().parse().ok(),
            }
        };
        let parts: Vec<f64> = s
            .split(',')
            .map(entry)
            .collect::<Option<_>>()
            .ok_or_else(|| Error::InvalidParams(format!("bad weights `{s}`")))?;
        match parts[..] {
            [a, o, y] => Self::new(a, o, y),
            _ => Err(Error::InvalidParams(format!("expected three comma-separated weights, got `{s}`"))),
        }
    }
}

impl fmt::Display for GovernanceWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.lambda_app, self.lambda_op, self.lambda_sys)
    }
}

/// How chain clearing prices are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriceMode {
    /// Prices are optimized per chain by the inner solve.
    #[default]
    DecisionVariable,
    /// Midpoint of the lowest application cap and highest operator floor.
    MidRange,
}

/// Which application utility enters the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AppUtilityMode {
    /// Weighted base/price/downtime/degradation terms.
    #[default]
    Core,
    /// `0.1 + 0.9·utilization − 0.1·price/cap` for assigned apps, 0 otherwise.
    PricePenalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SysWeights {
    pub core: f64,
    pub stake: f64,
    pub diversity: f64,
}

impl Default for SysWeights {
    fn default() -> Self {
        Self { core: 1.0, stake: 0.0, diversity: 0.0 }
    }
}

/// Extension parameters. The defaults switch every extension off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtensionConfig {
    /// Overprovisioning slack, at least 1.
    pub gamma: f64,
    /// Target type distribution; empty means uniform over the instance's types.
    pub diversity_target: Vec<f64>,
    pub delta_rem: f64,
    pub delta_add: f64,
    pub delta_env: f64,
    pub alpha_gas: f64,
    pub alpha_fee: f64,
    pub n_epochs_between_changes: f64,
    pub sys_weights: SysWeights,
    pub price_mode: PriceMode,
    pub app_utility_mode: AppUtilityMode,
    /// Compute the realized type mix over all declared apps instead of the
    /// assigned ones. The result is then independent of the assignment.
    pub diversity_over_all_apps: bool,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            diversity_target: Vec::new(),
            delta_rem: 0.0,
            delta_add: 0.0,
            delta_env: 0.0,
            alpha_gas: 0.0,
            alpha_fee: 0.0,
            n_epochs_between_changes: 10.0,
            sys_weights: SysWeights::default(),
            price_mode: PriceMode::DecisionVariable,
            app_utility_mode: AppUtilityMode::Core,
            diversity_over_all_apps: false,
        }
    }
}

impl ExtensionConfig {
    pub fn target(&self, type_count: usize) -> Vec<f64> {
        if self.diversity_target.is_empty() {
            vec![1.0 / type_count.max(1) as f64; type_count]
        } else {
            self.diversity_target.clone()
        }
    }

    pub(crate) fn validate(&self, type_count: usize) -> Vec<ValidationError> {
        let mut errs = Vec::new();
        let mut bad = |msg: String| errs.push(ValidationError::Extension(msg));
        if !(self.gamma >= 1.0) {
            bad(format!("gamma must be at least 1, got {}", self.gamma));
        }
        if !self.diversity_target.is_empty() {
            if self.diversity_target.len() != type_count {
                bad(format!("diversity target has {} entries for {} types", self.diversity_target.len(), type_count));
            }
            let sum: f64 = self.diversity_target.iter().sum();
            if self.diversity_target.iter().any(|x| *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
                bad(format!("diversity target must be a distribution, sums to {sum}"));
            }
        }
        for (name, v) in [
            ("delta_rem", self.delta_rem),
            ("delta_add", self.delta_add),
            ("delta_env", self.delta_env),
            ("alpha_gas", self.alpha_gas),
            ("alpha_fee", self.alpha_fee),
        ] {
            if !(v >= 0.0) {
                bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if !(self.n_epochs_between_changes > 0.0) {
            bad(format!("n_epochs_between_changes must be positive, got {}", self.n_epochs_between_changes));
        }
        let sw = self.sys_weights;
        if [sw.core, sw.stake, sw.diversity].iter().any(|x| *x < 0.0)
            || (sw.core + sw.stake + sw.diversity - 1.0).abs() > 1e-9
        {
            bad("system weights must be nonnegative and sum to 1".to_string());
        }
        errs
    }
}

/// A min-max normalization range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }
}

/// Optional explicit bounds per normalized quantity; missing entries are
/// derived from the instance (see [`ResolvedBounds`]).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationBounds {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub app_base: Option<Bounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price_cost: Option<Bounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub downtime: Option<Bounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degradation: Option<Bounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub op_final: Option<Bounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sys_base: Option<Bounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_stake: Option<Bounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diversity: Option<Bounds>,
}

impl NormalizationBounds {
    fn entries(&self) -> [(&'static str, Option<Bounds>); 8] {
        [
            ("app_base", self.app_base),
            ("price_cost", self.price_cost),
            ("downtime", self.downtime),
            ("degradation", self.degradation),
            ("op_final", self.op_final),
            ("sys_base", self.sys_base),
            ("total_stake", self.total_stake),
            ("diversity", self.diversity),
        ]
    }

    pub(crate) fn validate(&self) -> Vec<ValidationError> {
        self.entries()
            .into_iter()
            .filter_map(|(quantity, b)| {
                let b = b?;
                (!(b.max > b.min)).then_some(ValidationError::Bounds { quantity, min: b.min, max: b.max })
            })
            .collect()
    }
}

/// Concrete bounds used during evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedBounds {
    /// `None`: each application is scaled by its own demand, `(0, gas_a)`.
    pub app_base: Option<Bounds>,
    pub price_cost: Bounds,
    pub downtime: Bounds,
    pub degradation: Bounds,
    pub op_final: Bounds,
    pub sys_base: Bounds,
    pub total_stake: Bounds,
    pub diversity: Bounds,
}

fn positive_or_one(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        x
    } else {
        1.0
    }
}

/// Upper bound on total fees: processed gas cannot exceed aggregate supply or
/// demand, and no chain clears above the highest application cap.
pub fn sys_fee_upper_bound(instance: &Instance) -> f64 {
    let supply: f64 = instance.ops.iter().map(|o| o.gas_capacity).sum();
    let demand: f64 = instance.apps.iter().map(|a| a.gas_demand).sum();
    let cap = instance.apps.iter().map(|a| a.gasprice_max).fold(0.0, f64::max);
    supply.min(demand) * cap
}

impl ResolvedBounds {
    /// Fills unspecified bounds with analytic ones. `prev_apps` is the number
    /// of applications in the previous epoch, if any.
    pub fn resolve(instance: &Instance, prev_apps: usize) -> Self {
        let nb = &instance.norm_bounds;
        let ext = &instance.extension_config;
        let sys_max = positive_or_one(sys_fee_upper_bound(instance));
        let min_stake = instance.ops.iter().map(|o| o.stake).fold(f64::INFINITY, f64::min);
        let op_max = positive_or_one(sys_max / min_stake);
        let n_apps = instance.apps.len().max(prev_apps) as f64;
        let downtime_max = positive_or_one((ext.delta_rem + ext.delta_add) * n_apps + ext.delta_env);
        let total_stake = positive_or_one(instance.ops.iter().map(|o| o.stake).sum());
        Self {
            app_base: nb.app_base,
            price_cost: nb.price_cost.unwrap_or(Bounds::new(0.0, 1.0)),
            downtime: nb.downtime.unwrap_or(Bounds::new(0.0, downtime_max)),
            degradation: nb.degradation.unwrap_or(Bounds::new(0.0, positive_or_one(ext.alpha_gas + ext.alpha_fee))),
            op_final: nb.op_final.unwrap_or(Bounds::new(0.0, op_max)),
            sys_base: nb.sys_base.unwrap_or(Bounds::new(0.0, sys_max)),
            total_stake: nb.total_stake.unwrap_or(Bounds::new(0.0, total_stake)),
            diversity: nb.diversity.unwrap_or(Bounds::new(0.0, 2.0)),
        }
    }
}

/// Min-max scaling into `[0, 1]`; `q` is clamped into the bounds first.
pub fn normalize(q: f64, bounds: Bounds) -> f64 {
    let span = bounds.max - bounds.min;
    if !(span > 0.0) {
        return 0.0;
    }
    ((q - bounds.min) / span).clamp(0.0, 1.0)
}

/// `1 − normalize(q)`: turns a cost into a reward.
pub fn complement_normalize(q: f64, bounds: Bounds) -> f64 {
    1.0 - normalize(q, bounds)
}

/// Gas served to one member of a chain under proportional sharing, with the
/// chain's processed gas overprovisioned by `gamma`.
pub fn served_gas(gas: f64, demand: f64, supply: f64, gamma: f64) -> f64 {
    if demand <= 0.0 {
        return 0.0;
    }
    gas / demand * f64::min(gamma * demand, supply)
}

fn view_of(views: &[ChainView], chain: Option<usize>) -> Option<&ChainView> {
    let c = chain?;
    views.iter().find(|v| v.chain_id == c)
}

/// Gas units served to application `app`; zero when unassigned.
pub fn app_base_utility(instance: &Instance, views: &[ChainView], assignment: &Assignment, app: usize) -> f64 {
    view_of(views, assignment.app_chain[app])
        .map_or(0.0, |v| served_gas(instance.apps[app].gas_demand, v.demand, v.supply, instance.extension_config.gamma))
}

/// Fees per unit of stake on the operator's chain; zero when unassigned.
pub fn op_yield(views: &[ChainView], op: usize) -> f64 {
    views.iter().find(|v| v.ops.contains(&op)).map_or(0.0, |v| {
        if v.stake_total > 0.0 {
            v.fee / v.stake_total
        } else {
            0.0
        }
    })
}

/// Total fees `Σ_c price_c · Gas_c`.
pub fn sys_base_utility(views: &[ChainView]) -> f64 {
    views.iter().map(|v| v.price * v.gas_processed).sum()
}

/// L1 distance between the realized type mix and the target.
///
/// The realized mix is taken over assigned applications; with none assigned
/// it is the zero vector and the penalty equals the target's mass, 1.
pub fn diversity_penalty(instance: &Instance, assignment: &Assignment) -> f64 {
    let t = instance.type_count;
    let target = instance.extension_config.target(t);
    let all = instance.extension_config.diversity_over_all_apps;
    let mut counts = vec![0.0; t];
    let mut total = 0.0;
    for (a, app) in instance.apps.iter().enumerate() {
        if all || assignment.app_chain[a].is_some() {
            if let Some(slot) = counts.get_mut(app.app_type.wrapping_sub(1)) {
                *slot += 1.0;
            }
            total += 1.0;
        }
    }
    counts
        .iter()
        .zip(&target)
        .map(|(c, d)| {
            let real = if total > 0.0 { c / total } else { 0.0 };
            (real - d).abs()
        })
        .sum()
}

/// Price-penalized application utility used in the simulations.
pub fn simulation_app_utility(utilization: f64, price: f64, gasprice_max: f64) -> f64 {
    0.1 + 0.9 * utilization - 0.1 * price / gasprice_max
}

/// Per-application utility terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppUtility {
    pub id: String,
    pub chain: Option<usize>,
    /// Gas units served (overprovisioned).
    pub base: f64,
    /// Stakeholder-level utility before weighting: served gas in the core
    /// mode, the price-penalized utility in the simulation mode.
    pub raw: f64,
    pub normalized_base: f64,
    pub price_cost: f64,
    pub downtime_cost: f64,
    pub degradation_cost: f64,
    pub final_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpUtility {
    pub id: String,
    pub chain: Option<usize>,
    #[serde(rename = "yield")]
    pub yield_per_stake: f64,
    pub revenue: f64,
    pub downtime: f64,
    /// Downtime-adjusted yield.
    pub final_utility: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysUtility {
    pub fees: f64,
    pub total_stake: f64,
    pub diversity_penalty: f64,
    pub final_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    #[serde(flatten)]
    pub view: ChainView,
    pub downtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub violations: Vec<Violation>,
    pub total_downtime: f64,
    pub diversity_penalty: f64,
}

/// Stakeholder aggregates: the normalized means entering the objective and
/// the raw means used for solo optima and misalignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub app_final_mean: f64,
    pub op_normalized_mean: f64,
    pub sys_final: f64,
    pub app_raw_mean: f64,
    pub op_raw_mean: f64,
    pub sys_raw: f64,
}

/// Every utility, penalty and the objective value for one assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub feasible: bool,
    pub objective: f64,
    pub app_utilities: Vec<AppUtility>,
    pub op_utilities: Vec<OpUtility>,
    pub sys_utility: SysUtility,
    pub chains: Vec<ChainReport>,
    pub penalties: Penalties,
    pub aggregates: Aggregates,
}

/// Evaluates a priced assignment. Infeasible assignments (including prices
/// outside their interval) are an error.
pub fn global_objective(
    instance: &Instance,
    assignment: &Assignment,
    history: Option<&EpochHistory>,
    weights: GovernanceWeights,
) -> Result<EvaluationReport> {
    assignment.check_shape(instance)?;
    let evaluator = Evaluator::new(instance, history, weights);
    let report = evaluator.configure_unchecked(assignment.clone()).report();
    if !report.feasible {
        return Err(Error::Infeasible { violations: report.penalties.violations.len() });
    }
    Ok(report)
}

/// Final utility of one application for a priced assignment.
pub fn app_final_utility(
    instance: &Instance,
    assignment: &Assignment,
    history: Option<&EpochHistory>,
    app: usize,
) -> Result<f64> {
    assignment.check_shape(instance)?;
    let evaluator = Evaluator::new(instance, history, GovernanceWeights::APP);
    Ok(evaluator.configure_unchecked(assignment.clone()).app_terms(app, &assignment.chain_prices).final_utility)
}

/// Downtime-adjusted yield of one operator (not normalized).
pub fn op_final_utility(
    instance: &Instance,
    assignment: &Assignment,
    history: Option<&EpochHistory>,
    op: usize,
) -> Result<f64> {
    assignment.check_shape(instance)?;
    let evaluator = Evaluator::new(instance, history, GovernanceWeights::OP);
    Ok(evaluator.configure_unchecked(assignment.clone()).op_terms(op, &assignment.chain_prices).final_utility)
}

/// Weighted system utility in `[0, 1]`.
pub fn sys_final_utility(instance: &Instance, assignment: &Assignment) -> Result<f64> {
    assignment.check_shape(instance)?;
    let evaluator = Evaluator::new(instance, None, GovernanceWeights::SYS);
    Ok(evaluator.configure_unchecked(assignment.clone()).sys_terms(&assignment.chain_prices).final_utility)
}

/// Degradation cost of one application relative to the previous epoch.
pub fn degradation_cost(
    instance: &Instance,
    assignment: &Assignment,
    history: Option<&EpochHistory>,
    app: usize,
) -> Result<f64> {
    assignment.check_shape(instance)?;
    let evaluator = Evaluator::new(instance, history, GovernanceWeights::APP);
    Ok(evaluator.configure_unchecked(assignment.clone()).app_terms(app, &assignment.chain_prices).degradation_cost)
}
