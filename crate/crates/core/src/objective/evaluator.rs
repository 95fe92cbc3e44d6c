use crate::error::Result;
use crate::model::{build_views, structural_violations, Assignment, ChainView, Instance, Violation, ViolationKind};
use crate::objective::history::{check_history, compute_downtime, PrevState};
use crate::objective::{
    diversity_penalty, normalize, served_gas, simulation_app_utility, Aggregates, AppUtility, AppUtilityMode, Bounds,
    ChainReport, DowntimeReport, EpochHistory, EvaluationReport, GovernanceWeights, OpUtility, Penalties,
    ResolvedBounds, SysUtility,
};

/// Per-instance evaluation context: resolved bounds, previous-epoch state and
/// governance weights. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    instance: &'a Instance,
    weights: GovernanceWeights,
    bounds: ResolvedBounds,
    prev: Option<PrevState>,
}

impl<'a> Evaluator<'a> {
    pub fn new(instance: &'a Instance, history: Option<&EpochHistory>, weights: GovernanceWeights) -> Self {
        let prev = history.map(|h| PrevState::new(instance, h));
        let prev_apps = prev.as_ref().map_or(0, |p| p.prev_app_count);
        Self { instance, weights, bounds: ResolvedBounds::resolve(instance, prev_apps), prev }
    }

    /// Like [`Evaluator::new`] but rejects an inconsistent history.
    pub fn try_new(instance: &'a Instance, history: Option<&EpochHistory>, weights: GovernanceWeights) -> Result<Self> {
        if let Some(h) = history {
            check_history(h)?;
        }
        Ok(Self::new(instance, history, weights))
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn weights(&self) -> GovernanceWeights {
        self.weights
    }

    pub fn with_weights(&self, weights: GovernanceWeights) -> Self {
        Self { weights, ..self.clone() }
    }

    pub fn bounds(&self) -> &ResolvedBounds {
        &self.bounds
    }

    pub fn has_history(&self) -> bool {
        self.prev.is_some()
    }

    pub fn configure(&self, assignment: &Assignment) -> Result<Configuration<'_>> {
        assignment.check_shape(self.instance)?;
        Ok(self.configure_unchecked(assignment.clone()))
    }

    /// Caller guarantees `assignment.check_shape` holds.
    pub(crate) fn configure_unchecked(&self, mut assignment: Assignment) -> Configuration<'_> {
        let inst = self.instance;
        let ext = &inst.extension_config;
        let views = build_views(inst, &assignment);
        let width = views.last().map_or(0, |v| v.chain_id + 1);
        if assignment.chain_prices.len() < width {
            assignment.chain_prices.resize(width, 0.0);
        }
        let mut slot = vec![usize::MAX; width];
        for (i, v) in views.iter().enumerate() {
            slot[v.chain_id] = i;
        }
        let violations = structural_violations(inst, &views);
        let downtime = compute_downtime(inst, &assignment, self.prev.as_ref(), ext);

        let n_apps = inst.apps.len();
        let mut app_served = vec![0.0; n_apps];
        let mut app_utilization = vec![0.0; n_apps];
        let mut app_dgas = vec![0.0; n_apps];
        for (a, app) in inst.apps.iter().enumerate() {
            let ga = match assignment.app_chain[a] {
                Some(c) => {
                    let v = &views[slot[c]];
                    app_utilization[a] = if v.demand > 0.0 { v.gas_processed / v.demand } else { 0.0 };
                    served_gas(app.gas_demand, v.demand, v.supply, ext.gamma)
                }
                None => 0.0,
            };
            app_served[a] = ga;
            if let Some(Some(p)) = self.prev.as_ref().map(|p| p.app_prev[a]) {
                let now = ga.min(app.gas_demand) / app.gas_demand.min(p.gas_prev);
                app_dgas[a] = (p.served_fraction - now).max(0.0);
            }
        }
        let total_stake = views.iter().filter(|v| !v.ops.is_empty()).map(|v| v.stake_total).sum();
        Configuration {
            eval: self,
            diversity: diversity_penalty(inst, &assignment),
            assignment,
            views,
            slot,
            violations,
            downtime,
            app_served,
            app_utilization,
            app_dgas,
            total_stake,
        }
    }
}

/// Terms for one application at given prices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppTerms {
    pub base: f64,
    pub normalized_base: f64,
    pub price_cost: f64,
    pub downtime_cost: f64,
    pub degradation_cost: f64,
    pub final_utility: f64,
    pub raw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpTerms {
    pub yield_per_stake: f64,
    pub revenue: f64,
    pub downtime: f64,
    pub final_utility: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SysTerms {
    pub fees: f64,
    pub total_stake: f64,
    pub diversity_penalty: f64,
    pub final_utility: f64,
}

/// An assignment with every price-independent quantity precomputed.
/// Price vectors passed to the `*_at` methods are indexed by chain label.
#[derive(Debug, Clone)]
pub struct Configuration<'e> {
    eval: &'e Evaluator<'e>,
    assignment: Assignment,
    views: Vec<ChainView>,
    slot: Vec<usize>,
    violations: Vec<Violation>,
    downtime: DowntimeReport,
    app_served: Vec<f64>,
    app_utilization: Vec<f64>,
    app_dgas: Vec<f64>,
    diversity: f64,
    total_stake: f64,
}

impl<'e> Configuration<'e> {
    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn into_assignment(self) -> Assignment {
        self.assignment
    }

    pub fn views(&self) -> &[ChainView] {
        &self.views
    }

    pub fn evaluator(&self) -> &'e Evaluator<'e> {
        self.eval
    }

    /// Structural feasibility: everything except price placement.
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn structural_violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn downtime(&self) -> &DowntimeReport {
        &self.downtime
    }

    pub fn prices(&self) -> &[f64] {
        &self.assignment.chain_prices
    }

    pub fn set_prices(&mut self, prices: &[f64]) {
        self.assignment.chain_prices = prices.to_vec();
        for v in &mut self.views {
            v.set_price(prices[v.chain_id]);
        }
    }

    pub(crate) fn view_index(&self, chain: usize) -> usize {
        self.slot[chain]
    }

    pub fn app_terms(&self, a: usize, prices: &[f64]) -> AppTerms {
        let inst = self.eval.instance;
        let ext = &inst.extension_config;
        let b = &self.eval.bounds;
        let app = &inst.apps[a];
        let base = self.app_served[a];
        let normalized_base = normalize(base, b.app_base.unwrap_or(Bounds::new(0.0, app.gas_demand)));
        let (price_ratio, price_cost, sim) = match self.assignment.app_chain[a] {
            Some(c) => {
                let r = prices[c] / app.gasprice_max;
                (r, r, simulation_app_utility(self.app_utilization[a], prices[c], app.gasprice_max))
            }
            None => (0.0, 1.0, 0.0),
        };
        let downtime_cost = self.downtime.app_downtime[a];
        let degradation_cost = match self.eval.prev.as_ref().and_then(|p| p.app_prev[a]) {
            Some(p) => ext.alpha_gas * self.app_dgas[a] + ext.alpha_fee * (price_ratio - p.price_ratio).max(0.0),
            None => 0.0,
        };
        let (final_utility, raw) = match ext.app_utility_mode {
            AppUtilityMode::Core => {
                let w = &app.weights;
                let mut u = w.base * normalized_base;
                if w.price > 0.0 {
                    u += w.price * (1.0 - normalize(price_cost, b.price_cost));
                }
                if w.downtime > 0.0 {
                    u += w.downtime * (1.0 - normalize(downtime_cost, b.downtime));
                }
                if w.degradation > 0.0 {
                    u += w.degradation * (1.0 - normalize(degradation_cost, b.degradation));
                }
                (u, base)
            }
            AppUtilityMode::PricePenalized => (sim, sim),
        };
        AppTerms { base, normalized_base, price_cost, downtime_cost, degradation_cost, final_utility, raw }
    }

    pub fn op_terms(&self, o: usize, prices: &[f64]) -> OpTerms {
        let inst = self.eval.instance;
        let Some(c) = self.assignment.op_chain[o] else {
            return OpTerms {
                yield_per_stake: 0.0,
                revenue: 0.0,
                downtime: 0.0,
                final_utility: 0.0,
                normalized: normalize(0.0, self.eval.bounds.op_final),
            };
        };
        let v = &self.views[self.slot[c]];
        let fee = prices[c] * v.gas_processed;
        let yield_per_stake = if v.stake_total > 0.0 { fee / v.stake_total } else { 0.0 };
        let stake = inst.ops[o].stake;
        let revenue = yield_per_stake * stake;
        let downtime = self.downtime.op_downtime[o];
        let n = inst.extension_config.n_epochs_between_changes;
        let final_utility = (revenue - downtime * revenue / n) / stake;
        OpTerms {
            yield_per_stake,
            revenue,
            downtime,
            final_utility,
            normalized: normalize(final_utility, self.eval.bounds.op_final),
        }
    }

    pub fn sys_terms(&self, prices: &[f64]) -> SysTerms {
        let b = &self.eval.bounds;
        let sw = self.eval.instance.extension_config.sys_weights;
        let fees: f64 = self.views.iter().map(|v| prices[v.chain_id] * v.gas_processed).sum();
        let mut u = sw.core * normalize(fees, b.sys_base);
        if sw.stake > 0.0 {
            u += sw.stake * normalize(self.total_stake, b.total_stake);
        }
        if sw.diversity > 0.0 {
            u += sw.diversity * (1.0 - normalize(self.diversity, b.diversity));
        }
        SysTerms { fees, total_stake: self.total_stake, diversity_penalty: self.diversity, final_utility: u }
    }

    /// Scalar objective ignoring price placement; infeasible structures get
    /// the sentinel `-1 - violations`.
    pub fn objective_at(&self, prices: &[f64]) -> f64 {
        if !self.violations.is_empty() {
            return -1.0 - self.violations.len() as f64;
        }
        let w = self.eval.weights;
        let inst = self.eval.instance;
        let mut total = 0.0;
        if w.lambda_app > 0.0 && !inst.apps.is_empty() {
            let s: f64 = (0..inst.apps.len()).map(|a| self.app_terms(a, prices).final_utility).sum();
            total += w.lambda_app * s / inst.apps.len() as f64;
        }
        if w.lambda_op > 0.0 && !inst.ops.is_empty() {
            let s: f64 = (0..inst.ops.len()).map(|o| self.op_terms(o, prices).normalized).sum();
            total += w.lambda_op * s / inst.ops.len() as f64;
        }
        if w.lambda_sys > 0.0 {
            total += w.lambda_sys * self.sys_terms(prices).final_utility;
        }
        total
    }

    pub fn objective(&self) -> f64 {
        self.objective_at(&self.assignment.chain_prices)
    }

    pub fn aggregates_at(&self, prices: &[f64]) -> Aggregates {
        let inst = self.eval.instance;
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        let (mut af, mut ar) = (0.0, 0.0);
        for a in 0..inst.apps.len() {
            let t = self.app_terms(a, prices);
            af += t.final_utility;
            ar += t.raw;
        }
        let (mut on, mut or) = (0.0, 0.0);
        for o in 0..inst.ops.len() {
            let t = self.op_terms(o, prices);
            on += t.normalized;
            or += t.final_utility;
        }
        let sys = self.sys_terms(prices);
        Aggregates {
            app_final_mean: mean(af, inst.apps.len()),
            op_normalized_mean: mean(on, inst.ops.len()),
            sys_final: sys.final_utility,
            app_raw_mean: mean(ar, inst.apps.len()),
            op_raw_mean: mean(or, inst.ops.len()),
            sys_raw: sys.fees,
        }
    }

    pub fn aggregates(&self) -> Aggregates {
        self.aggregates_at(&self.assignment.chain_prices)
    }

    /// Prices at which the objective restricted to chain `chain` can bend,
    /// given the other chains' current prices.
    pub fn price_kinks(&self, chain: usize) -> Vec<f64> {
        let inst = self.eval.instance;
        let ext = &inst.extension_config;
        let b = &self.eval.bounds;
        let v = &self.views[self.slot[chain]];
        let mut out = Vec::new();
        if ext.app_utility_mode == AppUtilityMode::Core {
            for &a in &v.apps {
                let app = &inst.apps[a];
                let gp = app.gasprice_max;
                if app.weights.price > 0.0 {
                    out.extend([b.price_cost.min * gp, b.price_cost.max * gp]);
                }
                if app.weights.degradation > 0.0 {
                    if let Some(p) = self.eval.prev.as_ref().and_then(|p| p.app_prev[a]) {
                        out.push(p.price_ratio * gp);
                        if ext.alpha_fee > 0.0 {
                            let g = ext.alpha_gas * self.app_dgas[a];
                            for bound in [b.degradation.min, b.degradation.max] {
                                out.push(gp * (p.price_ratio + (bound - g) / ext.alpha_fee));
                            }
                        }
                    }
                }
            }
        }
        let n = ext.n_epochs_between_changes;
        for &o in &v.ops {
            let k = v.gas_processed * (1.0 - self.downtime.op_downtime[o] / n) / v.stake_total;
            if k != 0.0 && k.is_finite() {
                out.extend([b.op_final.min / k, b.op_final.max / k]);
            }
        }
        if v.gas_processed > 0.0 {
            let others: f64 = self
                .views
                .iter()
                .filter(|w| w.chain_id != chain)
                .map(|w| self.assignment.chain_prices[w.chain_id] * w.gas_processed)
                .sum();
            for bound in [b.sys_base.min, b.sys_base.max] {
                out.push((bound - others) / v.gas_processed);
            }
        }
        out.retain(|p| p.is_finite());
        out
    }

    /// Full report at the stored prices, price placement included.
    pub fn report(&self) -> EvaluationReport {
        let inst = self.eval.instance;
        let prices = &self.assignment.chain_prices;
        let mut violations = self.violations.clone();
        for v in &self.views {
            if let Some(iv) = v.price_interval {
                if !iv.is_empty() && !iv.contains(v.price) {
                    violations.push(Violation {
                        kind: ViolationKind::PriceInterval,
                        chain: Some(v.chain_id),
                        detail: format!("price {} outside [{}, {}]", v.price, iv.lo, iv.hi),
                    });
                }
            }
        }
        let feasible = violations.is_empty();
        let objective = if feasible { self.objective_at(prices) } else { -1.0 - violations.len() as f64 };
        let app_utilities = inst
            .apps
            .iter()
            .enumerate()
            .map(|(a, app)| {
                let t = self.app_terms(a, prices);
                AppUtility {
                    id: app.id.clone(),
                    chain: self.assignment.app_chain[a],
                    base: t.base,
                    raw: t.raw,
                    normalized_base: t.normalized_base,
                    price_cost: t.price_cost,
                    downtime_cost: t.downtime_cost,
                    degradation_cost: t.degradation_cost,
                    final_utility: t.final_utility,
                }
            })
            .collect();
        let op_utilities = inst
            .ops
            .iter()
            .enumerate()
            .map(|(o, op)| {
                let t = self.op_terms(o, prices);
                OpUtility {
                    id: op.id.clone(),
                    chain: self.assignment.op_chain[o],
                    yield_per_stake: t.yield_per_stake,
                    revenue: t.revenue,
                    downtime: t.downtime,
                    final_utility: t.final_utility,
                    normalized: t.normalized,
                }
            })
            .collect();
        let s = self.sys_terms(prices);
        EvaluationReport {
            feasible,
            objective,
            app_utilities,
            op_utilities,
            sys_utility: SysUtility {
                fees: s.fees,
                total_stake: s.total_stake,
                diversity_penalty: s.diversity_penalty,
                final_utility: s.final_utility,
            },
            chains: self
                .views
                .iter()
                .map(|v| ChainReport { view: v.clone(), downtime: self.downtime.chain(v.chain_id) })
                .collect(),
            penalties: Penalties {
                violations,
                total_downtime: self.downtime.total(),
                diversity_penalty: self.diversity,
            },
            aggregates: self.aggregates_at(prices),
        }
    }
}
