//! Multi-epoch simulation: perturb declarations, solve warm-started from the
//! previous epoch, and feed that epoch back in as history.
//!
//! How declarations evolve between epochs is a simulation choice of this
//! crate: multiplicative log-uniform jitter plus Bernoulli arrivals and
//! departures, and scripted removals.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fairness::{compensation, sample_optimal_set, CompensationReport, ExpectationMode};
use crate::misalignment::misalignment_score;
use crate::model::{validate_instance, Assignment, Instance};
use crate::objective::{EpochHistory, GovernanceWeights};
use crate::search::{canonical_assignment, solve, Solution, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    /// Each positive declaration is multiplied by `exp(u)`, `u` uniform in
    /// `[-ln(1 + jitter), ln(1 + jitter)]`.
    pub jitter: f64,
    /// Per-epoch probability that a new application (and, separately, a
    /// new operator) arrives.
    pub arrival_rate: f64,
    /// Per-agent, per-epoch departure probability.
    pub departure_rate: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self { jitter: 0.0, arrival_rate: 0.0, departure_rate: 0.0 }
    }
}

/// A scripted change applied at the start of an epoch (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioEvent {
    RemoveOp { epoch: usize, id: String },
    RemoveApp { epoch: usize, id: String },
}

impl ScenarioEvent {
    fn epoch(&self) -> usize {
        match self {
            ScenarioEvent::RemoveOp { epoch, .. } | ScenarioEvent::RemoveApp { epoch, .. } => *epoch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub instance: Instance,
    pub epochs: usize,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    /// One entry for constant weights, otherwise one per epoch (the last
    /// entry repeats).
    #[serde(default = "default_weights")]
    pub weights: Vec<GovernanceWeights>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub misalignment: bool,
    /// Fairness sample runs per epoch; 0 disables compensation.
    #[serde(default)]
    pub fairness_runs: usize,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
}

fn default_weights() -> Vec<GovernanceWeights> {
    vec![GovernanceWeights::default()]
}

impl Scenario {
    pub fn new(instance: Instance, epochs: usize) -> Self {
        Self {
            instance,
            epochs,
            perturbation: PerturbationSpec::default(),
            weights: default_weights(),
            solver: SolverConfig::default(),
            misalignment: false,
            fairness_runs: 0,
            events: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParams("a scenario needs at least one epoch".into()));
        }
        let p = &self.perturbation;
        if !(p.jitter >= 0.0) {
            return Err(Error::InvalidParams(format!("jitter must be nonnegative, got {}", p.jitter)));
        }
        for (name, r) in [("arrival_rate", p.arrival_rate), ("departure_rate", p.departure_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidParams(format!("{name} must lie in [0, 1], got {r}")));
            }
        }
        if self.weights.is_empty() {
            return Err(Error::InvalidParams("weights schedule is empty".into()));
        }
        for w in &self.weights {
            GovernanceWeights::new(w.lambda_app, w.lambda_op, w.lambda_sys)?;
        }
        self.solver.validate()?;
        let errs = validate_instance(&self.instance);
        if !errs.is_empty() {
            return Err(Error::InvalidInstance(errs));
        }
        Ok(())
    }

    pub fn weights_at(&self, epoch: usize) -> GovernanceWeights {
        self.weights[(epoch - 1).min(self.weights.len() - 1)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub weights: GovernanceWeights,
    pub instance_digest: String,
    pub assignment_digest: Option<String>,
    pub prev_assignment_digest: Option<String>,
    pub solution: Option<Solution>,
    pub chain_downtime: Vec<(usize, f64)>,
    pub total_downtime: f64,
    pub mis: Option<f64>,
    pub compensation: Option<CompensationReport>,
    pub evaluations: usize,
    pub error: Option<String>,
}

/// SHA-256 of the canonical JSON form of an assignment.
pub fn assignment_digest(assignment: &Assignment) -> String {
    let canon = canonical_assignment(assignment);
    let bytes = serde_json::to_vec(&canon).expect("assignments serialize");
    hex::encode(Sha256::digest(bytes))
}

fn instance_digest(instance: &Instance) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(instance).expect("instances serialize")))
}

fn jitter_factor(rng: &mut ChaCha8Rng, jitter: f64) -> f64 {
    let r = (1.0 + jitter).ln();
    rng.random_range(-r..=r).exp()
}

/// Next epoch's declarations. Draws happen only for nonzero rates, so a
/// static scenario consumes no randomness.
fn perturb(instance: &Instance, spec: &PerturbationSpec, epoch: usize, rng: &mut ChaCha8Rng) -> Instance {
    let mut next = instance.clone();
    if spec.jitter > 0.0 {
        for a in &mut next.apps {
            a.gas_demand *= jitter_factor(rng, spec.jitter);
            a.stake_required *= jitter_factor(rng, spec.jitter);
            a.gasprice_max *= jitter_factor(rng, spec.jitter);
        }
        for o in &mut next.ops {
            o.gas_capacity *= jitter_factor(rng, spec.jitter);
            o.stake *= jitter_factor(rng, spec.jitter);
            o.gasprice_min *= jitter_factor(rng, spec.jitter);
        }
    }
    if spec.departure_rate > 0.0 {
        // Keep at least one agent of each kind.
        let keep_apps: Vec<bool> = next.apps.iter().map(|_| !rng.random_bool(spec.departure_rate)).collect();
        let keep_ops: Vec<bool> = next.ops.iter().map(|_| !rng.random_bool(spec.departure_rate)).collect();
        if keep_apps.iter().any(|k| *k) {
            let mut it = keep_apps.iter();
            next.apps.retain(|_| *it.next().unwrap());
        }
        if keep_ops.iter().any(|k| *k) {
            let mut it = keep_ops.iter();
            next.ops.retain(|_| *it.next().unwrap());
        }
    }
    if spec.arrival_rate > 0.0 {
        if !next.apps.is_empty() && rng.random_bool(spec.arrival_rate) {
            let mut a = next.apps[rng.random_range(0..next.apps.len())].clone();
            a.id = format!("a_e{epoch}");
            a.prev_gas_demand = None;
            a.prev_gasprice_max = None;
            next.apps.push(a);
        }
        if !next.ops.is_empty() && rng.random_bool(spec.arrival_rate) {
            let mut o = next.ops[rng.random_range(0..next.ops.len())].clone();
            o.id = format!("o_e{epoch}");
            next.ops.push(o);
        }
    }
    next
}

fn apply_event(instance: &mut Instance, event: &ScenarioEvent) -> Result<()> {
    match event {
        ScenarioEvent::RemoveOp { id, .. } => {
            let i = instance.ops.iter().position(|o| &o.id == id).ok_or_else(|| Error::UnknownAgent(id.clone()))?;
            instance.ops.remove(i);
        }
        ScenarioEvent::RemoveApp { id, .. } => {
            let i = instance.apps.iter().position(|a| &a.id == id).ok_or_else(|| Error::UnknownAgent(id.clone()))?;
            instance.apps.remove(i);
        }
    }
    Ok(())
}

/// Previous assignment mapped onto the surviving agents of `instance`.
pub fn restrict_assignment(prev: &Instance, assignment: &Assignment, instance: &Instance) -> Assignment {
    let apps: HashMap<&str, Option<usize>> =
        prev.apps.iter().zip(&assignment.app_chain).map(|(a, c)| (a.id.as_str(), *c)).collect();
    let ops: HashMap<&str, Option<usize>> =
        prev.ops.iter().zip(&assignment.op_chain).map(|(o, c)| (o.id.as_str(), *c)).collect();
    Assignment::from_labels(
        instance.apps.iter().map(|a| apps.get(a.id.as_str()).copied().flatten()).collect(),
        instance.ops.iter().map(|o| ops.get(o.id.as_str()).copied().flatten()).collect(),
    )
}

/// Runs every epoch in order. A failing epoch is recorded with its error and
/// leaves the previous state in place for the next one.
pub fn run_scenario(scenario: &Scenario) -> Result<Vec<EpochRecord>> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.solver.seed);
    rng.set_stream(0x5ce7a710);
    let mut current = scenario.instance.clone();
    let mut prev: Option<(Instance, Assignment, String)> = None;
    let mut records = Vec::with_capacity(scenario.epochs);

    for epoch in 1..=scenario.epochs {
        if epoch > 1 {
            current = perturb(&current, &scenario.perturbation, epoch, &mut rng);
        }
        let weights = scenario.weights_at(epoch);
        let mut record = EpochRecord {
            epoch,
            weights,
            instance_digest: String::new(),
            assignment_digest: None,
            prev_assignment_digest: prev.as_ref().map(|p| p.2.clone()),
            solution: None,
            chain_downtime: Vec::new(),
            total_downtime: 0.0,
            mis: None,
            compensation: None,
            evaluations: 0,
            error: None,
        };
        let mut next = current.clone();
        let outcome = scenario
            .events
            .iter()
            .filter(|e| e.epoch() == epoch)
            .try_for_each(|e| apply_event(&mut next, e))
            .and_then(|()| {
                let errs = validate_instance(&next);
                if errs.is_empty() {
                    Ok(())
                } else {
                    Err(Error::InvalidInstance(errs))
                }
            })
            .and_then(|()| {
                let history =
                    prev.as_ref().map(|(i, a, _)| EpochHistory { instance: i.clone(), assignment: a.clone() });
                let warm = prev.as_ref().map(|(i, a, _)| restrict_assignment(i, a, &next));
                let solution = solve(&next, history.as_ref(), weights, &scenario.solver, warm.as_ref())?;
                let mis =
                    if scenario.misalignment { Some(misalignment_score(&next, &scenario.solver)?.mis) } else { None };
                let comp = if scenario.fairness_runs > 0 {
                    let sample =
                        sample_optimal_set(&next, history.as_ref(), weights, &scenario.solver, scenario.fairness_runs)?;
                    let drawn = sample.draw(scenario.solver.seed.wrapping_add(epoch as u64));
                    Some(compensation(&sample, drawn, ExpectationMode::Uniform)?)
                } else {
                    None
                };
                Ok((solution, mis, comp))
            });
        current = next;
        record.instance_digest = instance_digest(&current);
        match outcome {
            Ok((solution, mis, comp)) => {
                let digest = assignment_digest(&solution.assignment);
                record.assignment_digest = Some(digest.clone());
                record.chain_downtime = solution.report.chains.iter().map(|c| (c.view.chain_id, c.downtime)).collect();
                record.total_downtime = solution.report.penalties.total_downtime;
                record.evaluations = solution.evaluations_used;
                record.mis = mis;
                record.compensation = comp;
                prev = Some((current.clone(), solution.assignment.clone(), digest));
                record.solution = Some(solution);
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        records.push(record);
    }
    Ok(records)
}

/// Timeline CSV: `epoch,objective,u_app,u_op,u_sys,total_downtime,mis`.
/// Failed epochs have empty metric cells.
pub fn timeline_csv(records: &[EpochRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "objective", "u_app", "u_op", "u_sys", "total_downtime", "mis"])?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    for r in records {
        let s = r.solution.as_ref();
        let agg = s.map(|s| s.report.aggregates);
        w.write_record([
            r.epoch.to_string(),
            opt(s.map(Solution::objective)),
            opt(agg.map(|a| a.app_final_mean)),
            opt(agg.map(|a| a.op_normalized_mean)),
            opt(agg.map(|a| a.sys_final)),
            opt(s.map(|_| r.total_downtime)),
            opt(r.mis),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One JSON object per line.
pub fn records_jsonl(records: &[EpochRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}
