//! Brute-force reference implementations used by the integration and
//! acceptance tests. They share nothing with the library beyond the
//! declaration types.
#![allow(dead_code)]

use multichain::{Assignment, GovernanceWeights, Instance};

/// Every way to give each agent (apps, then ops) a chain in `0..cap` or
/// none, up to relabeling of chains. Built recursively as restricted growth
/// strings.
pub fn all_labelings(n_apps: usize, n_ops: usize, cap: usize) -> Vec<Assignment> {
    fn rec(
        i: usize,
        n: usize,
        used: usize,
        cap: usize,
        cur: &mut Vec<Option<usize>>,
        out: &mut Vec<Vec<Option<usize>>>,
    ) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        rec(i + 1, n, used, cap, cur, out);
        cur.pop();
        for c in 0..used.min(cap) {
            cur.push(Some(c));
            rec(i + 1, n, used, cap, cur, out);
            cur.pop();
        }
        if used < cap {
            cur.push(Some(used));
            rec(i + 1, n, used + 1, cap, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n_apps + n_ops, 0, cap, &mut Vec::new(), &mut out);
    out.into_iter()
        .map(|v| {
            let (a, o) = v.split_at(n_apps);
            Assignment::from_labels(a.to_vec(), o.to_vec())
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Chain {
    pub demand: f64,
    pub gas: f64,
    pub stake: f64,
    pub lo: f64,
    pub hi: f64,
    pub has_apps: bool,
    pub has_ops: bool,
}

/// Per-label chain aggregates with the min-capacity supply rule, or `None`
/// when some chain breaks stake or price feasibility.
pub fn chains(inst: &Instance, asg: &Assignment) -> Option<Vec<Chain>> {
    let n = asg.app_chain.iter().chain(&asg.op_chain).flatten().map(|c| c + 1).max().unwrap_or(0);
    let mut out =
        vec![
            Chain { demand: 0.0, gas: 0.0, stake: 0.0, lo: 0.0, hi: f64::INFINITY, has_apps: false, has_ops: false };
            n
        ];
    let mut supply = vec![f64::INFINITY; n];
    let mut need = vec![0.0f64; n];
    for (a, c) in asg.app_chain.iter().enumerate() {
        if let Some(c) = *c {
            let app = &inst.apps[a];
            out[c].demand += app.gas_demand;
            out[c].hi = out[c].hi.min(app.gasprice_max);
            out[c].has_apps = true;
            need[c] = need[c].max(app.stake_required);
        }
    }
    for (o, c) in asg.op_chain.iter().enumerate() {
        if let Some(c) = *c {
            let op = &inst.ops[o];
            out[c].stake += op.stake;
            out[c].lo = out[c].lo.max(op.gasprice_min);
            out[c].has_ops = true;
            supply[c] = supply[c].min(op.gas_capacity);
        }
    }
    for (c, ch) in out.iter_mut().enumerate() {
        if ch.stake < need[c] {
            return None;
        }
        if ch.has_apps && ch.has_ops {
            if ch.lo > ch.hi {
                return None;
            }
            ch.gas = ch.demand.min(supply[c]);
        }
    }
    Some(out)
}

/// Raw stakeholder aggregates at the given prices: mean served gas, mean
/// operator yield and total fees.
pub fn raw_aggregates(inst: &Instance, asg: &Assignment, ch: &[Chain], prices: &[f64]) -> [f64; 3] {
    let served: f64 = asg
        .app_chain
        .iter()
        .enumerate()
        .filter_map(|(a, c)| c.map(|c| (a, c)))
        .filter(|&(_, c)| ch[c].has_ops)
        .map(|(a, c)| inst.apps[a].gas_demand / ch[c].demand * ch[c].gas)
        .sum();
    let yields: f64 =
        asg.op_chain.iter().flatten().filter(|&&c| ch[c].has_apps).map(|&c| prices[c] * ch[c].gas / ch[c].stake).sum();
    let fees: f64 =
        ch.iter().enumerate().filter(|(_, c)| c.has_apps && c.has_ops).map(|(i, c)| prices[i] * c.gas).sum();
    [served / inst.apps.len().max(1) as f64, yields / inst.ops.len().max(1) as f64, fees]
}

/// Each two-sided chain priced at its highest feasible price; one-sided
/// chains at zero.
pub fn top_prices(ch: &[Chain]) -> Vec<f64> {
    ch.iter().map(|c| if c.has_apps && c.has_ops { c.hi } else { 0.0 }).collect()
}

/// Core-model objective with default normalization: served fraction per
/// app, yield over `fee_cap / min op stake` per op, fees over `fee_cap`.
pub fn core_objective(inst: &Instance, asg: &Assignment, ch: &[Chain], prices: &[f64], w: GovernanceWeights) -> f64 {
    let total_supply: f64 = inst.ops.iter().map(|o| o.gas_capacity).sum();
    let total_demand: f64 = inst.apps.iter().map(|a| a.gas_demand).sum();
    let top_cap = inst.apps.iter().map(|a| a.gasprice_max).fold(0.0, f64::max);
    let fee_cap = total_supply.min(total_demand) * top_cap;
    let min_stake = inst.ops.iter().map(|o| o.stake).fold(f64::INFINITY, f64::min);
    let yield_cap = fee_cap / min_stake;
    let clamp = |x: f64| x.clamp(0.0, 1.0);

    let app: f64 = (0..inst.apps.len())
        .map(|a| match asg.app_chain[a] {
            Some(c) if ch[c].has_ops => ch[c].gas / ch[c].demand,
            _ => 0.0,
        })
        .sum::<f64>()
        / inst.apps.len().max(1) as f64;
    let op: f64 = (0..inst.ops.len())
        .map(|o| match asg.op_chain[o] {
            Some(c) if ch[c].has_apps => clamp(prices[c] * ch[c].gas / ch[c].stake / yield_cap),
            _ => 0.0,
        })
        .sum::<f64>()
        / inst.ops.len().max(1) as f64;
    let fees: f64 =
        ch.iter().enumerate().filter(|(_, c)| c.has_apps && c.has_ops).map(|(i, c)| prices[i] * c.gas).sum();
    let sys = clamp(fees / fee_cap);
    w.lambda_app * app + w.lambda_op * op + w.lambda_sys * sys
}

/// Best core-model objective over all assignments. Every term is
/// nondecreasing in each chain price, so the top of each interval is optimal.
pub fn brute_force_optimum(inst: &Instance, w: GovernanceWeights) -> f64 {
    let cap = inst.apps.len().min(inst.ops.len());
    all_labelings(inst.apps.len(), inst.ops.len(), cap)
        .iter()
        .filter_map(|asg| {
            let ch = chains(inst, asg)?;
            Some(core_objective(inst, asg, &ch, &top_prices(&ch), w))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `1 − max_x min_k U^k(x) / U^k_*` over raw aggregates, all at top prices.
pub fn brute_force_misalignment(inst: &Instance) -> f64 {
    let cap = inst.apps.len().min(inst.ops.len());
    let rows: Vec<[f64; 3]> = all_labelings(inst.apps.len(), inst.ops.len(), cap)
        .iter()
        .filter_map(|asg| {
            let ch = chains(inst, asg)?;
            Some(raw_aggregates(inst, asg, &ch, &top_prices(&ch)))
        })
        .collect();
    let solo: Vec<f64> = (0..3).map(|k| rows.iter().map(|r| r[k]).fold(0.0, f64::max)).collect();
    let best = rows
        .iter()
        .map(|r| (0..3).map(|k| if solo[k] > 0.0 { r[k] / solo[k] } else { 1.0 }).fold(1.0, f64::min))
        .fold(0.0, f64::max);
    1.0 - best
}

/// Subset-sum by enumerating all `2^n` subsets.
pub fn splits_evenly(numbers: &[u64]) -> bool {
    let total: u64 = numbers.iter().sum();
    (0u32..1 << numbers.len()).any(|mask| {
        let s: u64 = numbers.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, x)| x).sum();
        2 * s == total
    })
}

/// Nondecreasing lists of length `1..=max_len` over `1..=max_value`.
pub fn multisets(max_len: usize, max_value: u64) -> Vec<Vec<u64>> {
    fn rec(start: u64, max_value: u64, left: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if left == 0 {
            return;
        }
        for v in start..=max_value {
            cur.push(v);
            rec(v, max_value, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, max_value, max_len, &mut Vec::new(), &mut out);
    out
}

/// Maximum of a one-dimensional function on `[lo, hi]`: a uniform grid of
/// `points` followed by golden-section refinement around the best cells.
pub fn grid_maximum(lo: f64, hi: f64, points: usize, f: impl Fn(f64) -> f64) -> f64 {
    if hi <= lo {
        return f(lo);
    }
    let step = (hi - lo) / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|i| if i + 1 == points { hi } else { lo + step * i as f64 }).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..points).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for &i in order.iter().take(4) {
        let (mut a, mut b) = ((xs[i] - step).max(lo), (xs[i] + step).min(hi));
        for _ in 0..80 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if f(c) >= f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best = best.max(f(a)).max(f(b)).max(f((a + b) / 2.0));
    }
    best
}

pub struct PriceCase {
    pub instance: Instance,
    pub history: Option<multichain::objective::EpochHistory>,
    pub assignment: Assignment,
    pub weights: GovernanceWeights,
}

fn random_labels(inst: &Instance, rng: &mut impl rand::Rng) -> Assignment {
    let cap = inst.apps.len().min(inst.ops.len());
    let mut draw = |_| {
        let x = rng.random_range(0..=cap);
        (x < cap).then_some(x)
    };
    Assignment::from_labels((0..inst.apps.len()).map(&mut draw).collect(), (0..inst.ops.len()).map(&mut draw).collect())
}

fn two_sided(asg: &Assignment) -> bool {
    asg.app_chain.iter().flatten().any(|c| asg.op_chain.contains(&Some(*c)))
}

/// Random structurally feasible assignments with at least one two-sided
/// chain. With `stability`, the instance carries price and degradation
/// preferences, downtime parameters and a random previous epoch.
pub fn price_cases(count: usize, seed: u64, stability: bool) -> Vec<PriceCase> {
    use multichain::instances::{gen_uniform, UniformGenParams};
    use multichain::model::PreferenceWeights;
    use multichain::objective::EpochHistory;
    use multichain::pricing::solve_all_prices;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let mut inst = gen_uniform(&UniformGenParams {
            apps: rng.random_range(1..=5),
            ops: rng.random_range(1..=4),
            seed: rng.random(),
            ..Default::default()
        })
        .unwrap();
        let a: f64 = rng.random();
        let o: f64 = rng.random::<f64>() * (1.0 - a);
        let weights = GovernanceWeights::new(a, o, 1.0 - a - o).unwrap_or_default();
        let mut history = None;
        if stability {
            let ext = &mut inst.extension_config;
            ext.alpha_gas = rng.random_range(0.1..1.0);
            ext.alpha_fee = rng.random_range(0.1..1.0);
            ext.delta_rem = 1.0;
            ext.delta_add = 1.0;
            ext.delta_env = 2.0;
            for app in &mut inst.apps {
                let raw: [f64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
                let s: f64 = raw.iter().sum();
                app.weights = PreferenceWeights {
                    base: raw[0] / s,
                    price: raw[1] / s,
                    downtime: raw[2] / s,
                    degradation: 1.0 - (raw[0] + raw[1] + raw[2]) / s,
                };
            }
            let prev = random_labels(&inst, &mut rng);
            let Ok(prices) = solve_all_prices(&inst, &prev, None, GovernanceWeights::SYS) else { continue };
            // Previous prices drawn inside each interval.
            let views =
                multichain::model::derive_chain_views(&inst, &prev.clone().with_prices(prices.clone())).unwrap();
            let mut p = prices;
            for v in &views {
                if let Some(iv) = v.price_interval {
                    p[v.chain_id] = iv.lo + rng.random::<f64>() * (iv.hi - iv.lo);
                }
            }
            history = Some(EpochHistory::new(inst.clone(), prev.with_prices(p)).unwrap());
        }
        let asg = random_labels(&inst, &mut rng);
        if !two_sided(&asg) || solve_all_prices(&inst, &asg, history.as_ref(), weights).is_err() {
            continue;
        }
        out.push(PriceCase { instance: inst, history, assignment: asg, weights });
    }
    out
}

/// Relative gap between the inner price solve and a per-chain grid search
/// with local refinement; negative when the grid finds something better.
pub fn price_solve_gap(case: &PriceCase, points: usize) -> f64 {
    use multichain::objective::Evaluator;
    use multichain::pricing::solve_all_prices;

    let prices = solve_all_prices(&case.instance, &case.assignment, case.history.as_ref(), case.weights).unwrap();
    let ev = Evaluator::try_new(&case.instance, case.history.as_ref(), case.weights).unwrap();
    let cfg = ev.configure(&case.assignment).unwrap();
    let ours = cfg.objective_at(&prices);
    let mut worst: f64 = 0.0;
    for v in cfg.views() {
        let Some(iv) = v.price_interval else { continue };
        let grid = grid_maximum(iv.lo, iv.hi, points, |p| {
            let mut q = prices.clone();
            q[v.chain_id] = p;
            cfg.objective_at(&q)
        });
        let gap = (ours - grid) / grid.abs().max(1e-12);
        worst = if gap.abs() > worst.abs() { gap } else { worst };
    }
    worst
}

/// Best `[u_app, u_op, u_sys]` on the knob instance, by listing the seven
/// nonempty operator sets that can serve the single application.
pub fn knob_maxima(demand: f64, p_max: f64, kappa: f64, sigma: f64, capacity: f64) -> [f64; 3] {
    let low = (1.0 - sigma) / 2.0;
    let q_sys = demand * p_max;
    let q_op = q_sys / low.min(sigma);
    let mut best = [0.0f64; 3];
    for mask in 1u32..8 {
        let high = mask & 1 == 1;
        let stake = if high { sigma } else { 0.0 } + low * (mask >> 1).count_ones() as f64;
        let floor = if high { kappa * p_max } else { 0.0 };
        let price = (floor + p_max) / 2.0;
        let gas = demand.min(capacity);
        let app = 0.1 + 0.9 * gas / demand - 0.1 * price / p_max;
        let members = mask.count_ones() as f64;
        let op = members * (price * gas / stake / q_op).min(1.0) / 3.0;
        let sys = price * gas / q_sys;
        for (b, v) in best.iter_mut().zip([app, op, sys]) {
            *b = b.max(v);
        }
    }
    best
}

/// Core-model optimal set (within `tol`) and each member's served gas per
/// application. Capabilities are ignored.
pub fn optimal_served_gas(inst: &Instance, w: GovernanceWeights, tol: f64) -> Vec<Vec<f64>> {
    let cap = inst.apps.len().min(inst.ops.len());
    let scored: Vec<(f64, Vec<f64>)> = all_labelings(inst.apps.len(), inst.ops.len(), cap)
        .iter()
        .filter_map(|asg| {
            let ch = chains(inst, asg)?;
            let v = core_objective(inst, asg, &ch, &top_prices(&ch), w);
            let served = (0..inst.apps.len())
                .map(|a| match asg.app_chain[a] {
                    Some(c) if ch[c].has_ops => inst.apps[a].gas_demand / ch[c].demand * ch[c].gas,
                    _ => 0.0,
                })
                .collect();
            Some((v, served))
        })
        .collect();
    let best = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    scored.into_iter().filter(|s| s.0 >= best - tol).map(|s| s.1).collect()
}
