//! Declarations, assignments, derived chain aggregates and the feasibility
//! rules of the core model (including capability compatibility).

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::objective::{ExtensionConfig, NormalizationBounds};

/// Relative slack used when comparing declared quantities.
const CMP_TOL: f64 = 1e-9;

/// Per-application preference over the four final-utility terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceWeights {
    pub base: f64,
    pub price: f64,
    pub downtime: f64,
    pub degradation: f64,
}

impl Default for PreferenceWeights {
    fn default() -> Self {
        Self { base: 1.0, price: 0.0, downtime: 0.0, degradation: 0.0 }
    }
}

impl PreferenceWeights {
    pub fn sum(&self) -> f64 {
        self.base + self.price + self.downtime + self.degradation
    }

    fn as_array(&self) -> [f64; 4] {
        [self.base, self.price, self.downtime, self.degradation]
    }
}

fn one() -> usize {
    1
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Application {
    pub id: String,
    #[serde(rename = "gas")]
    pub gas_demand: f64,
    #[serde(rename = "stake")]
    pub stake_required: f64,
    pub gasprice_max: f64,
    /// One entry per capability dimension: 1 requires, 0 forbids, -1 indifferent.
    #[serde(rename = "caps", default)]
    pub capabilities: Vec<i8>,
    /// Type index in `1..=type_count`.
    #[serde(rename = "type", default = "one")]
    pub app_type: usize,
    #[serde(rename = "prev_gas", default, skip_serializing_if = "Option::is_none")]
    pub prev_gas_demand: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prev_gasprice_max: Option<f64>,
    #[serde(default)]
    pub weights: PreferenceWeights,
}

impl Application {
    pub fn new(id: impl Into<String>, gas: f64, stake: f64, gasprice_max: f64) -> Self {
        Self {
            id: id.into(),
            gas_demand: gas,
            stake_required: stake,
            gasprice_max,
            capabilities: Vec::new(),
            app_type: 1,
            prev_gas_demand: None,
            prev_gasprice_max: None,
            weights: PreferenceWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operator {
    pub id: String,
    #[serde(rename = "gas")]
    pub gas_capacity: f64,
    pub stake: f64,
    pub gasprice_min: f64,
    /// One entry per capability dimension: 1 supports, 0 lacks, -1 indifferent.
    #[serde(rename = "caps", default)]
    pub capabilities: Vec<i8>,
}

impl Operator {
    pub fn new(id: impl Into<String>, gas: f64, stake: f64, gasprice_min: f64) -> Self {
        Self { id: id.into(), gas_capacity: gas, stake, gasprice_min, capabilities: Vec::new() }
    }
}

/// How member operator capacities combine into chain supply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SupplyAggregator {
    /// Slowest operator bounds the chain.
    #[default]
    Min,
    Sum,
    /// Lower nearest-rank quantile, `q` in `[0, 1]`.
    Quantile(f64),
}

impl SupplyAggregator {
    /// Aggregates capacities; an empty operator set supplies nothing.
    pub fn aggregate(&self, capacities: &[f64]) -> f64 {
        if capacities.is_empty() {
            return 0.0;
        }
        match *self {
            SupplyAggregator::Min => capacities.iter().copied().fold(f64::INFINITY, f64::min),
            SupplyAggregator::Sum => capacities.iter().sum(),
            SupplyAggregator::Quantile(q) => {
                let mut sorted = capacities.to_vec();
                sorted.sort_by(f64::total_cmp);
                let rank = (q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).floor() as usize;
                sorted[rank]
            }
        }
    }
}

/// One epoch's declarations plus model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub apps: Vec<Application>,
    pub ops: Vec<Operator>,
    #[serde(default)]
    pub capability_dims: usize,
    #[serde(default = "one")]
    pub type_count: usize,
    #[serde(rename = "extensions", default)]
    pub extension_config: ExtensionConfig,
    #[serde(rename = "normalization", default)]
    pub norm_bounds: NormalizationBounds,
    #[serde(default)]
    pub supply_aggregator: SupplyAggregator,
    /// Admits zero application stake requirements (reduction instances only).
    #[serde(default, skip_serializing_if = "is_false")]
    pub relaxed_stake: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, f64>,
}

impl Instance {
    pub fn new(apps: Vec<Application>, ops: Vec<Operator>) -> Self {
        Self {
            apps,
            ops,
            capability_dims: 0,
            type_count: 1,
            extension_config: ExtensionConfig::default(),
            norm_bounds: NormalizationBounds::default(),
            supply_aggregator: SupplyAggregator::Min,
            relaxed_stake: false,
            metadata: BTreeMap::new(),
        }
    }

    /// Upper bound on the number of chains, `min(|OP|, |APP|)`.
    pub fn chain_cap(&self) -> usize {
        self.apps.len().min(self.ops.len())
    }

    pub fn agent_count(&self) -> usize {
        self.apps.len() + self.ops.len()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A type-invariant violation found by [`validate_instance`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("{agent}: {field} must be positive, got {value}")]
    NonPositive { agent: String, field: &'static str, value: f64 },
    #[error("{agent}: {field} must be nonnegative, got {value}")]
    Negative { agent: String, field: &'static str, value: f64 },
    #[error("{agent}: preference weights must lie in [0,1] and sum to 1, got sum {sum}")]
    WeightSum { agent: String, sum: f64 },
    #[error("{agent}: capability vector has {found} entries, expected {expected}")]
    CapabilityLength { agent: String, expected: usize, found: usize },
    #[error("{agent}: capability value {value} on dimension {dim} is not in {{-1, 0, 1}}")]
    CapabilityValue { agent: String, dim: usize, value: i8 },
    #[error("{agent}: type {app_type} outside 1..={type_count}")]
    AppType { agent: String, app_type: usize, type_count: usize },
    #[error("duplicate agent id `{0}`")]
    DuplicateId(String),
    #[error("extension config: {0}")]
    Extension(String),
    #[error("normalization bounds for {quantity}: max {max} must exceed min {min}")]
    Bounds { quantity: &'static str, min: f64, max: f64 },
}

/// Validation switches. Zero operator price floors are admitted by default.
#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub allow_zero_price_floor: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { allow_zero_price_floor: true }
    }
}

pub fn validate_instance(instance: &Instance) -> Vec<ValidationError> {
    validate_instance_with(instance, ValidationOptions::default())
}

pub fn validate_instance_with(instance: &Instance, opts: ValidationOptions) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    let dims = instance.capability_dims;

    let positive = |errors: &mut Vec<ValidationError>, agent: &str, field, value: f64| {
        if !(value > 0.0) {
            errors.push(ValidationError::NonPositive { agent: agent.to_string(), field, value });
        }
    };
    let check_caps = |errors: &mut Vec<ValidationError>, agent: &str, caps: &[i8]| {
        if caps.len() != dims {
            errors.push(ValidationError::CapabilityLength {
                agent: agent.to_string(),
                expected: dims,
                found: caps.len(),
            });
        }
        for (dim, &value) in caps.iter().enumerate() {
            if !(-1..=1).contains(&value) {
                errors.push(ValidationError::CapabilityValue { agent: agent.to_string(), dim, value });
            }
        }
    };

    for app in &instance.apps {
        if !seen.insert(("app", app.id.as_str())) {
            errors.push(ValidationError::DuplicateId(app.id.clone()));
        }
        positive(&mut errors, &app.id, "gas", app.gas_demand);
        if instance.relaxed_stake {
            if !(app.stake_required >= 0.0) {
                errors.push(ValidationError::Negative {
                    agent: app.id.clone(),
                    field: "stake",
                    value: app.stake_required,
                });
            }
        } else {
            positive(&mut errors, &app.id, "stake", app.stake_required);
        }
        positive(&mut errors, &app.id, "gasprice_max", app.gasprice_max);
        if let Some(prev) = app.prev_gas_demand {
            positive(&mut errors, &app.id, "prev_gas", prev);
        }
        if let Some(prev) = app.prev_gasprice_max {
            positive(&mut errors, &app.id, "prev_gasprice_max", prev);
        }
        let w = app.weights.as_array();
        let sum = app.weights.sum();
        if w.iter().any(|x| !(0.0..=1.0).contains(x)) || (sum - 1.0).abs() > 1e-9 {
            errors.push(ValidationError::WeightSum { agent: app.id.clone(), sum });
        }
        check_caps(&mut errors, &app.id, &app.capabilities);
        if app.app_type == 0 || app.app_type > instance.type_count {
            errors.push(ValidationError::AppType {
                agent: app.id.clone(),
                app_type: app.app_type,
                type_count: instance.type_count,
            });
        }
    }

    for op in &instance.ops {
        if !seen.insert(("op", op.id.as_str())) {
            errors.push(ValidationError::DuplicateId(op.id.clone()));
        }
        positive(&mut errors, &op.id, "gas", op.gas_capacity);
        positive(&mut errors, &op.id, "stake", op.stake);
        if opts.allow_zero_price_floor {
            if !(op.gasprice_min >= 0.0) {
                errors.push(ValidationError::Negative {
                    agent: op.id.clone(),
                    field: "gasprice_min",
                    value: op.gasprice_min,
                });
            }
        } else {
            positive(&mut errors, &op.id, "gasprice_min", op.gasprice_min);
        }
        check_caps(&mut errors, &op.id, &op.capabilities);
    }

    if instance.type_count == 0 {
        errors.push(ValidationError::Extension("type_count must be at least 1".into()));
    }
    errors.extend(instance.extension_config.validate(instance.type_count));
    errors.extend(instance.norm_bounds.validate());
    errors
}

/// Decision object: per-agent chain membership plus per-chain prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub app_chain: Vec<Option<usize>>,
    pub op_chain: Vec<Option<usize>>,
    pub chain_prices: Vec<f64>,
}

impl Assignment {
    pub fn empty(n_apps: usize, n_ops: usize) -> Self {
        Self { app_chain: vec![None; n_apps], op_chain: vec![None; n_ops], chain_prices: Vec::new() }
    }

    /// Builds an assignment with zero prices sized to the largest label.
    pub fn from_labels(app_chain: Vec<Option<usize>>, op_chain: Vec<Option<usize>>) -> Self {
        let chains = app_chain.iter().chain(&op_chain).flatten().map(|&c| c + 1).max().unwrap_or(0);
        Self { app_chain, op_chain, chain_prices: vec![0.0; chains] }
    }

    pub fn with_prices(mut self, prices: Vec<f64>) -> Self {
        self.chain_prices = prices;
        self
    }

    /// Sorted, deduplicated chain labels in use.
    pub fn used_chains(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self.app_chain.iter().chain(&self.op_chain).flatten().copied().collect();
        used.sort_unstable();
        used.dedup();
        used
    }

    pub fn is_empty(&self) -> bool {
        self.app_chain.iter().chain(&self.op_chain).all(Option::is_none)
    }

    pub fn price(&self, chain: usize) -> f64 {
        self.chain_prices.get(chain).copied().unwrap_or(0.0)
    }

    pub fn check_shape(&self, instance: &Instance) -> Result<()> {
        if self.app_chain.len() != instance.apps.len() || self.op_chain.len() != instance.ops.len() {
            return Err(Error::Shape(format!(
                "assignment covers {} apps / {} ops, instance has {} / {}",
                self.app_chain.len(),
                self.op_chain.len(),
                instance.apps.len(),
                instance.ops.len()
            )));
        }
        let cap = instance.chain_cap();
        for c in self.used_chains() {
            if c >= cap {
                return Err(Error::Shape(format!("chain index {c} is not below the chain cap {cap}")));
            }
            if c >= self.chain_prices.len() {
                return Err(Error::Shape(format!("chain {c} has no price entry")));
            }
        }
        Ok(())
    }
}

/// Feasible clearing-price range `[lo, hi]` of a chain; empty when `lo > hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceInterval {
    pub lo: f64,
    pub hi: f64,
}

impl PriceInterval {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn contains(&self, price: f64) -> bool {
        let tol = CMP_TOL * self.lo.abs().max(self.hi.abs()).max(1.0);
        price >= self.lo - tol && price <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Derived per-chain aggregates for one nonempty chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainView {
    pub chain_id: usize,
    pub apps: Vec<usize>,
    pub ops: Vec<usize>,
    pub stake_total: f64,
    pub demand: f64,
    pub supply: f64,
    pub gas_processed: f64,
    pub price: f64,
    pub fee: f64,
    pub price_interval: Option<PriceInterval>,
    pub chain_caps: Vec<u8>,
}

impl ChainView {
    pub fn has_both_sides(&self) -> bool {
        !self.apps.is_empty() && !self.ops.is_empty()
    }

    /// Recomputes price-dependent fields.
    pub fn set_price(&mut self, price: f64) {
        self.price = price;
        self.fee = price * self.gas_processed;
    }
}

pub fn derive_chain_views(instance: &Instance, assignment: &Assignment) -> Result<Vec<ChainView>> {
    assignment.check_shape(instance)?;
    Ok(build_views(instance, assignment))
}

/// [`derive_chain_views`] without the shape check; callers guarantee shape.
pub(crate) fn build_views(instance: &Instance, assignment: &Assignment) -> Vec<ChainView> {
    let chains = assignment.used_chains();
    let width = chains.last().map_or(0, |&c| c + 1);
    let mut slot = vec![usize::MAX; width];
    for (i, &c) in chains.iter().enumerate() {
        slot[c] = i;
    }
    let mut members: Vec<(Vec<usize>, Vec<usize>)> = vec![(Vec::new(), Vec::new()); chains.len()];
    for (a, c) in assignment.app_chain.iter().enumerate() {
        if let Some(c) = c {
            members[slot[*c]].0.push(a);
        }
    }
    for (o, c) in assignment.op_chain.iter().enumerate() {
        if let Some(c) = c {
            members[slot[*c]].1.push(o);
        }
    }
    chains
        .iter()
        .zip(members)
        .map(|(&chain_id, (apps, ops))| {
            let stake_total = ops.iter().map(|&o| instance.ops[o].stake).sum();
            let demand = apps.iter().map(|&a| instance.apps[a].gas_demand).sum();
            let capacities: Vec<f64> = ops.iter().map(|&o| instance.ops[o].gas_capacity).collect();
            let supply = instance.supply_aggregator.aggregate(&capacities);
            let gas_processed = f64::min(demand, supply);
            let price = assignment.price(chain_id);
            let price_interval = interval_of(instance, &apps, &ops);
            let (chain_caps, _) = derive_chain_caps(instance, &apps, &ops);
            ChainView {
                chain_id,
                apps,
                ops,
                stake_total,
                demand,
                supply,
                gas_processed,
                price,
                fee: price * gas_processed,
                price_interval,
                chain_caps,
            }
        })
        .collect()
}

fn interval_of(instance: &Instance, apps: &[usize], ops: &[usize]) -> Option<PriceInterval> {
    if apps.is_empty() || ops.is_empty() {
        return None;
    }
    let lo = ops.iter().map(|&o| instance.ops[o].gasprice_min).fold(f64::NEG_INFINITY, f64::max);
    let hi = apps.iter().map(|&a| instance.apps[a].gasprice_max).fold(f64::INFINITY, f64::min);
    Some(PriceInterval { lo, hi })
}

/// Clearing-price interval: highest operator floor to lowest application cap.
pub fn price_interval(view: &ChainView) -> Result<PriceInterval> {
    view.price_interval.ok_or(Error::UndefinedInterval { chain: view.chain_id })
}

/// Derives binary chain capabilities and reports capability violations.
///
/// A dimension is 1 when some member app requires it and 0 when some member
/// app forbids it; both at once is a conflict. When every member app is
/// indifferent the value is chosen to accommodate the member operators,
/// which only fails if one operator supports and another lacks the feature.
pub fn derive_chain_caps(instance: &Instance, apps: &[usize], ops: &[usize]) -> (Vec<u8>, Vec<Violation>) {
    let dims = instance.capability_dims;
    let mut caps = vec![0u8; dims];
    let mut violations = Vec::new();
    let cap_of = |v: &[i8], d: usize| v.get(d).copied().unwrap_or(-1);
    for d in 0..dims {
        let requires = apps.iter().any(|&a| cap_of(&instance.apps[a].capabilities, d) == 1);
        let forbids = apps.iter().any(|&a| cap_of(&instance.apps[a].capabilities, d) == 0);
        let supports = ops.iter().any(|&o| cap_of(&instance.ops[o].capabilities, d) == 1);
        let lacks = ops.iter().any(|&o| cap_of(&instance.ops[o].capabilities, d) == 0);
        let value = match (requires, forbids) {
            (true, true) => {
                violations.push(Violation::new(
                    ViolationKind::CapabilityApp,
                    None,
                    format!("dimension {d}: member applications both require and forbid it"),
                ));
                1
            }
            (true, false) => 1,
            (false, true) => 0,
            (false, false) => u8::from(supports && !lacks),
        };
        caps[d] = value;
        let offending: Vec<&str> = ops
            .iter()
            .filter(|&&o| {
                let c = cap_of(&instance.ops[o].capabilities, d);
                (value == 1 && c == 0) || (value == 0 && c == 1)
            })
            .map(|&o| instance.ops[o].id.as_str())
            .collect();
        if !offending.is_empty() {
            violations.push(Violation::new(
                ViolationKind::CapabilityOp,
                None,
                format!("dimension {d} set to {value}, incompatible operators: {}", offending.join(", ")),
            ));
        }
    }
    (caps, violations)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Stake,
    PriceInterval,
    CapabilityApp,
    CapabilityOp,
    AssignmentShape,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::Stake => "stake",
            ViolationKind::PriceInterval => "price_interval",
            ViolationKind::CapabilityApp => "capability_app",
            ViolationKind::CapabilityOp => "capability_op",
            ViolationKind::AssignmentShape => "assignment_shape",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub chain: Option<usize>,
    pub detail: String,
}

impl Violation {
    fn new(kind: ViolationKind, chain: Option<usize>, detail: String) -> Self {
        Self { kind, chain, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self { feasible: violations.is_empty(), violations }
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Checks stake coverage, nonempty price intervals and capabilities, i.e.
/// every constraint except where the prices themselves sit.
pub(crate) fn structural_violations(instance: &Instance, views: &[ChainView]) -> Vec<Violation> {
    let mut out = Vec::new();
    for view in views {
        let required = view.apps.iter().map(|&a| instance.apps[a].stake_required).fold(0.0, f64::max);
        if view.stake_total < required * (1.0 - CMP_TOL) {
            out.push(Violation::new(
                ViolationKind::Stake,
                Some(view.chain_id),
                format!("stake {} below required {}", view.stake_total, required),
            ));
        }
        if let Some(iv) = view.price_interval {
            if iv.is_empty() {
                out.push(Violation::new(
                    ViolationKind::PriceInterval,
                    Some(view.chain_id),
                    format!("empty interval [{}, {}]", iv.lo, iv.hi),
                ));
            }
        }
        let (_, cap_violations) = derive_chain_caps(instance, &view.apps, &view.ops);
        out.extend(cap_violations.into_iter().map(|mut v| {
            v.chain = Some(view.chain_id);
            v
        }));
    }
    out
}

pub fn check_feasibility(instance: &Instance, assignment: &Assignment) -> FeasibilityReport {
    if let Err(e) = assignment.check_shape(instance) {
        return FeasibilityReport::from_violations(vec![Violation::new(
            ViolationKind::AssignmentShape,
            None,
            e.to_string(),
        )]);
    }
    let views = build_views(instance, assignment);
    let mut violations = structural_violations(instance, &views);
    for view in &views {
        if let Some(iv) = view.price_interval {
            if !iv.is_empty() && !iv.contains(view.price) {
                violations.push(Violation::new(
                    ViolationKind::PriceInterval,
                    Some(view.chain_id),
                    format!("price {} outside [{}, {}]", view.price, iv.lo, iv.hi),
                ));
            }
        }
    }
    FeasibilityReport::from_violations(violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::toy_example;

    fn assignment_a() -> Assignment {
        Assignment::from_labels(vec![Some(0), Some(0)], vec![Some(0), None]).with_prices(vec![8.0])
    }

    fn assignment_b() -> Assignment {
        Assignment::from_labels(vec![Some(0), None], vec![Some(0), None]).with_prices(vec![12.0])
    }

    #[test]
    fn toy_instance_is_well_formed() {
        assert!(validate_instance(&toy_example()).is_empty());
    }

    #[test]
    fn zero_gas_demand_is_rejected() {
        let mut inst = toy_example();
        inst.apps[0].gas_demand = 0.0;
        let errs = validate_instance(&inst);
        assert_eq!(errs.len(), 1);
        assert!(matches!(&errs[0], ValidationError::NonPositive { field: "gas", .. }));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let mut inst = toy_example();
        inst.apps[1].weights = PreferenceWeights { base: 0.5, price: 0.5, downtime: 0.5, degradation: 0.0 };
        let errs = validate_instance(&inst);
        assert!(matches!(&errs[..], [ValidationError::WeightSum { .. }]));
    }

    #[test]
    fn capability_values_are_restricted() {
        let mut inst = toy_example();
        inst.capability_dims = 1;
        for a in &mut inst.apps {
            a.capabilities = vec![-1];
        }
        for o in &mut inst.ops {
            o.capabilities = vec![1];
        }
        assert!(validate_instance(&inst).is_empty());
        inst.ops[0].capabilities = vec![2];
        assert!(matches!(&validate_instance(&inst)[..], [ValidationError::CapabilityValue { value: 2, .. }]));
    }

    #[test]
    fn zero_price_floor_is_a_configurable_relaxation() {
        let mut inst = toy_example();
        inst.ops[0].gasprice_min = 0.0;
        assert!(validate_instance(&inst).is_empty());
        let strict = ValidationOptions { allow_zero_price_floor: false };
        assert_eq!(validate_instance_with(&inst, strict).len(), 1);
    }

    #[test]
    fn assignment_a_aggregates() {
        let views = derive_chain_views(&toy_example(), &assignment_a()).unwrap();
        assert_eq!(views.len(), 1);
        let v = &views[0];
        assert_eq!((v.demand, v.supply, v.gas_processed, v.stake_total), (200.0, 150.0, 150.0, 60.0));
        assert_eq!(price_interval(v).unwrap(), PriceInterval { lo: 6.0, hi: 8.0 });
        assert_eq!(v.fee, 1200.0);
    }

    #[test]
    fn assignment_b_aggregates() {
        let views = derive_chain_views(&toy_example(), &assignment_b()).unwrap();
        let v = &views[0];
        assert_eq!((v.demand, v.supply, v.gas_processed), (120.0, 150.0, 120.0));
        assert_eq!(price_interval(v).unwrap(), PriceInterval { lo: 6.0, hi: 12.0 });
    }

    #[test]
    fn empty_assignment_has_no_views() {
        let views = derive_chain_views(&toy_example(), &Assignment::empty(2, 2)).unwrap();
        assert!(views.is_empty());
    }

    #[test]
    fn one_sided_chains() {
        let inst = toy_example();
        let only_op = Assignment::from_labels(vec![None, None], vec![Some(0), None]);
        let v = &derive_chain_views(&inst, &only_op).unwrap()[0];
        assert_eq!((v.demand, v.supply, v.gas_processed), (0.0, 150.0, 0.0));
        assert!(matches!(price_interval(v), Err(Error::UndefinedInterval { chain: 0 })));
        let only_app = Assignment::from_labels(vec![Some(0), None], vec![None, None]);
        let v = &derive_chain_views(&inst, &only_app).unwrap()[0];
        assert_eq!((v.supply, v.gas_processed), (0.0, 0.0));
    }

    #[test]
    fn a2_with_low_floor_operator_has_empty_interval() {
        let inst = toy_example();
        let asg = Assignment::from_labels(vec![None, Some(0)], vec![None, Some(0)]);
        let iv = price_interval(&derive_chain_views(&inst, &asg).unwrap()[0]).unwrap();
        assert_eq!((iv.lo, iv.hi), (9.0, 8.0));
        assert!(iv.is_empty());
        let report = check_feasibility(&inst, &asg.with_prices(vec![8.5]));
        assert!(!report.feasible);
        assert!(report.count(ViolationKind::PriceInterval) >= 1);
    }

    #[test]
    fn feasibility_of_worked_example() {
        let inst = toy_example();
        assert!(check_feasibility(&inst, &assignment_a()).feasible);
        assert!(check_feasibility(&inst, &assignment_b()).feasible);
        let off_interval = assignment_a().with_prices(vec![9.0]);
        assert_eq!(check_feasibility(&inst, &off_interval).count(ViolationKind::PriceInterval), 1);
    }

    #[test]
    fn under_staked_chain_is_infeasible() {
        // a1 needs 60, o_L brings 20.
        let asg = Assignment::from_labels(vec![Some(0), None], vec![None, Some(0)]).with_prices(vec![10.0]);
        let report = check_feasibility(&toy_example(), &asg);
        assert_eq!(report.count(ViolationKind::Stake), 1);
    }

    #[test]
    fn capability_rules() {
        let mut inst = toy_example();
        inst.capability_dims = 1;
        inst.apps[0].capabilities = vec![1];
        inst.apps[1].capabilities = vec![-1];
        inst.ops[0].capabilities = vec![0];
        inst.ops[1].capabilities = vec![-1];
        let report = check_feasibility(&inst, &assignment_b());
        assert_eq!(report.count(ViolationKind::CapabilityOp), 1);

        inst.ops[0].capabilities = vec![1];
        assert!(check_feasibility(&inst, &assignment_b()).feasible);

        // Contradictory application requirements on one chain.
        inst.apps[1].capabilities = vec![0];
        assert_eq!(check_feasibility(&inst, &assignment_a()).count(ViolationKind::CapabilityApp), 1);
    }

    #[test]
    fn indifferent_apps_let_operators_choose() {
        let mut inst = toy_example();
        inst.capability_dims = 1;
        for a in &mut inst.apps {
            a.capabilities = vec![-1];
        }
        inst.ops[0].capabilities = vec![1];
        inst.ops[1].capabilities = vec![-1];
        let both = Assignment::from_labels(vec![Some(0), None], vec![Some(0), Some(0)]);
        let views = derive_chain_views(&inst, &both).unwrap();
        assert_eq!(views[0].chain_caps, vec![1]);
        assert!(structural_violations(&inst, &views).is_empty());
        inst.ops[1].capabilities = vec![0];
        let views = derive_chain_views(&inst, &both).unwrap();
        assert_eq!(structural_violations(&inst, &views).len(), 1);
    }

    #[test]
    fn shape_errors() {
        let inst = toy_example();
        let bad = Assignment::from_labels(vec![Some(0)], vec![None, None]);
        assert!(matches!(derive_chain_views(&inst, &bad), Err(Error::Shape(_))));
        let over_cap = Assignment::from_labels(vec![Some(2), None], vec![None, None]);
        assert!(derive_chain_views(&inst, &over_cap).is_err());
        assert!(!check_feasibility(&inst, &over_cap).feasible);
    }

    #[test]
    fn supply_aggregators() {
        let caps = [50.0, 20.0, 80.0];
        assert_eq!(SupplyAggregator::Min.aggregate(&caps), 20.0);
        assert_eq!(SupplyAggregator::Sum.aggregate(&caps), 150.0);
        assert_eq!(SupplyAggregator::Quantile(0.5).aggregate(&caps), 50.0);
        assert_eq!(SupplyAggregator::Quantile(0.0).aggregate(&caps), 20.0);
        assert_eq!(SupplyAggregator::Min.aggregate(&[]), 0.0);
    }

    #[test]
    fn instance_json_uses_schema_keys() {
        let json = toy_example().to_json_pretty().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["apps", "ops", "capability_dims", "type_count", "extensions", "normalization", "supply_aggregator"]
        {
            assert!(value.get(key).is_some(), "missing key {key}");
        }
        let app = &value["apps"][0];
        for key in ["id", "gas", "stake", "gasprice_max", "caps", "type", "weights"] {
            assert!(app.get(key).is_some(), "missing app key {key}");
        }
        let op = &value["ops"][0];
        for key in ["id", "gas", "stake", "gasprice_min", "caps"] {
            assert!(op.get(key).is_some(), "missing op key {key}");
        }
        assert_eq!(Instance::from_json(&json).unwrap(), toy_example());
    }
}
