//! Previous-epoch state and the reconfiguration downtime model.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_views, Assignment, Instance};
use crate::objective::{served_gas, ExtensionConfig};

/// The previous epoch: its declarations and its priced assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochHistory {
    pub instance: Instance,
    pub assignment: Assignment,
}

impl EpochHistory {
    pub fn new(instance: Instance, assignment: Assignment) -> Result<Self> {
        assignment.check_shape(&instance)?;
        Ok(Self { instance, assignment })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let h: Self = serde_json::from_str(text)?;
        h.assignment.check_shape(&h.instance)?;
        Ok(h)
    }
}

/// What one surviving application looked like last epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct AppPrev {
    /// `min(GA_prev, gas_prev) / gas_prev`.
    pub served_fraction: f64,
    pub gas_prev: f64,
    /// `price_prev / gasprice_max_prev`; 0 when previously unassigned.
    pub price_ratio: f64,
}

/// Previous-epoch state keyed by current agent indices.
#[derive(Debug, Clone)]
pub(crate) struct PrevState {
    pub app_chain: Vec<Option<usize>>,
    pub op_chain: Vec<Option<usize>>,
    pub app_prev: Vec<Option<AppPrev>>,
    /// Application count per previous chain, departed applications included.
    chain_app_total: BTreeMap<usize, usize>,
    /// Surviving members per previous chain; ops are offset by `|APP|`.
    chain_members: BTreeMap<usize, Vec<usize>>,
    pub prev_app_count: usize,
}

impl PrevState {
    pub fn new(instance: &Instance, history: &EpochHistory) -> Self {
        let prev = &history.instance;
        let pa = &history.assignment;
        let app_idx: HashMap<&str, usize> = prev.apps.iter().enumerate().map(|(i, a)| (a.id.as_str(), i)).collect();
        let op_idx: HashMap<&str, usize> = prev.ops.iter().enumerate().map(|(i, o)| (o.id.as_str(), i)).collect();
        let views = build_views(prev, pa);
        let slot: HashMap<usize, usize> = views.iter().enumerate().map(|(i, v)| (v.chain_id, i)).collect();
        let gamma = prev.extension_config.gamma;

        let mut chain_app_total = BTreeMap::new();
        for c in pa.app_chain.iter().flatten() {
            *chain_app_total.entry(*c).or_insert(0) += 1;
        }

        let n_apps = instance.apps.len();
        let mut chain_members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut app_chain = vec![None; n_apps];
        let mut app_prev = vec![None; n_apps];
        for (a, app) in instance.apps.iter().enumerate() {
            let Some(&p) = app_idx.get(app.id.as_str()) else { continue };
            let declared = &prev.apps[p];
            let gas_prev = app.prev_gas_demand.unwrap_or(declared.gas_demand);
            let cap_prev = app.prev_gasprice_max.unwrap_or(declared.gasprice_max);
            let chain = pa.app_chain[p];
            app_chain[a] = chain;
            let (served, ratio) = match chain {
                Some(c) => {
                    let v = &views[slot[&c]];
                    let ga = served_gas(declared.gas_demand, v.demand, v.supply, gamma);
                    (ga.min(gas_prev) / gas_prev, pa.price(c) / cap_prev)
                }
                None => (0.0, 0.0),
            };
            app_prev[a] = Some(AppPrev { served_fraction: served, gas_prev, price_ratio: ratio });
            if let Some(c) = chain {
                chain_members.entry(c).or_default().push(a);
            }
        }
        let mut op_chain = vec![None; instance.ops.len()];
        for (o, op) in instance.ops.iter().enumerate() {
            if let Some(&p) = op_idx.get(op.id.as_str()) {
                op_chain[o] = pa.op_chain[p];
                if let Some(c) = pa.op_chain[p] {
                    chain_members.entry(c).or_default().push(n_apps + o);
                }
            }
        }
        Self { app_chain, op_chain, app_prev, chain_app_total, chain_members, prev_app_count: prev.apps.len() }
    }
}

/// Per-chain and per-agent downtime for one assignment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DowntimeReport {
    /// Current chain label to downtime (max member compute time).
    pub chain_downtime: BTreeMap<usize, f64>,
    /// Current chain label to the previous chain it continues, if any.
    pub matched_prev: BTreeMap<usize, usize>,
    pub op_computetime: Vec<f64>,
    pub app_downtime: Vec<f64>,
    pub op_downtime: Vec<f64>,
}

impl DowntimeReport {
    pub fn total(&self) -> f64 {
        self.chain_downtime.values().sum()
    }

    pub fn chain(&self, label: usize) -> f64 {
        self.chain_downtime.get(&label).copied().unwrap_or(0.0)
    }
}

/// Reconfiguration downtime relative to the previous epoch.
///
/// Chain labels carry no identity across epochs, so current chains are
/// matched to previous ones greedily by shared members. A chain without a
/// match is new: all its applications count as added and all its operators
/// as moved. Without history every cost is zero.
pub fn downtime_costs(
    instance: &Instance,
    assignment: &Assignment,
    history: Option<&EpochHistory>,
) -> Result<DowntimeReport> {
    assignment.check_shape(instance)?;
    let prev = history.map(|h| PrevState::new(instance, h));
    Ok(compute_downtime(instance, assignment, prev.as_ref(), &instance.extension_config))
}

pub(crate) fn compute_downtime(
    instance: &Instance,
    assignment: &Assignment,
    prev: Option<&PrevState>,
    ext: &ExtensionConfig,
) -> DowntimeReport {
    let n_apps = instance.apps.len();
    let n_ops = instance.ops.len();
    let Some(prev) = prev else {
        return DowntimeReport {
            chain_downtime: assignment.used_chains().into_iter().map(|c| (c, 0.0)).collect(),
            matched_prev: BTreeMap::new(),
            op_computetime: vec![0.0; n_ops],
            app_downtime: vec![0.0; n_apps],
            op_downtime: vec![0.0; n_ops],
        };
    };

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (a, c) in assignment.app_chain.iter().enumerate() {
        if let Some(c) = c {
            members.entry(*c).or_default().push(a);
        }
    }
    for (o, c) in assignment.op_chain.iter().enumerate() {
        if let Some(c) = c {
            members.entry(*c).or_default().push(n_apps + o);
        }
    }

    // Candidate pairs ordered by overlap, then by the current chain's
    // smallest member and the previous label, so the matching does not
    // depend on how current chains happen to be labelled.
    let mut pairs = Vec::new();
    for (&c, cur) in &members {
        for (&p, old) in &prev.chain_members {
            let overlap = cur.iter().filter(|m| old.contains(m)).count();
            if overlap > 0 {
                pairs.push((overlap, cur[0], p, c));
            }
        }
    }
    pairs.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut matched_prev = BTreeMap::new();
    let mut taken_prev = BTreeMap::new();
    for (_, _, p, c) in pairs {
        if matched_prev.contains_key(&c) || taken_prev.contains_key(&p) {
            continue;
        }
        matched_prev.insert(c, p);
        taken_prev.insert(p, c);
    }

    let added = |c: usize| -> usize {
        let m = matched_prev.get(&c).copied();
        members[&c].iter().filter(|&&x| x < n_apps && (m.is_none() || prev.app_chain[x] != m)).count()
    };
    let removed = |p: usize| -> usize {
        let total = prev.chain_app_total.get(&p).copied().unwrap_or(0);
        let stayed = match taken_prev.get(&p) {
            Some(&c) => members[&c].iter().filter(|&&x| x < n_apps && prev.app_chain[x] == Some(p)).count(),
            None => 0,
        };
        total - stayed
    };

    let mut op_computetime = vec![0.0; n_ops];
    for (o, t) in op_computetime.iter_mut().enumerate() {
        let before = prev.op_chain[o];
        let now = assignment.op_chain[o];
        let mut time = 0.0;
        if let Some(p) = before {
            time += ext.delta_rem * removed(p) as f64;
        }
        if let Some(c) = now {
            time += ext.delta_add * added(c) as f64;
        }
        let stayed = match (before, now) {
            (None, None) => true,
            (Some(p), Some(c)) => matched_prev.get(&c) == Some(&p),
            _ => false,
        };
        if !stayed {
            time += ext.delta_env;
        }
        *t = time;
    }

    let chain_downtime: BTreeMap<usize, f64> = members
        .iter()
        .map(|(&c, m)| {
            let d = m.iter().filter(|&&x| x >= n_apps).map(|&x| op_computetime[x - n_apps]).fold(0.0, f64::max);
            (c, d)
        })
        .collect();
    let lookup = |c: &Option<usize>| c.map_or(0.0, |c| chain_downtime[&c]);
    DowntimeReport {
        app_downtime: assignment.app_chain.iter().map(lookup).collect(),
        op_downtime: assignment.op_chain.iter().map(lookup).collect(),
        chain_downtime,
        matched_prev,
        op_computetime,
    }
}

/// Fails when the history is internally inconsistent.
pub(crate) fn check_history(history: &EpochHistory) -> Result<()> {
    history.assignment.check_shape(&history.instance).map_err(|e| match e {
        Error::Shape(s) => Error::Shape(format!("previous epoch: {s}")),
        other => other,
    })
}
