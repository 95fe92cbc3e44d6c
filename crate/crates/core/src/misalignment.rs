//! Solo optima per stakeholder type, relative utilities and the global
//! misalignment score `mis(I) = 1 − max_x min_k r^k(x)`.
//!
//! Stakeholder utilities here are the raw aggregates: mean application
//! utility, mean operator yield (downtime-adjusted) and total fees. Each is
//! affine in every chain price, which makes both the solo price choice and
//! the max-min price choice exact.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Assignment, Instance};
use crate::objective::{Aggregates, Configuration, Evaluator, GovernanceWeights, PriceMode};
use crate::search::{check_cap, exhaustive_best, search_keys, CanonicalKey, SearchMode, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stakeholder {
    App,
    Op,
    Sys,
}

impl Stakeholder {
    pub const ALL: [Stakeholder; 3] = [Stakeholder::App, Stakeholder::Op, Stakeholder::Sys];

    pub fn of(self, a: &Aggregates) -> f64 {
        match self {
            Stakeholder::App => a.app_raw_mean,
            Stakeholder::Op => a.op_raw_mean,
            Stakeholder::Sys => a.sys_raw,
        }
    }
}

/// One value per stakeholder type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub app: f64,
    pub op: f64,
    pub sys: f64,
}

impl Triple {
    pub fn get(&self, k: Stakeholder) -> f64 {
        match k {
            Stakeholder::App => self.app,
            Stakeholder::Op => self.op,
            Stakeholder::Sys => self.sys,
        }
    }

    fn from_fn(f: impl Fn(Stakeholder) -> f64) -> Self {
        Self { app: f(Stakeholder::App), op: f(Stakeholder::Op), sys: f(Stakeholder::Sys) }
    }

    pub fn min(&self) -> f64 {
        self.app.min(self.op).min(self.sys)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoloOptimum {
    pub stakeholder: Stakeholder,
    pub value: f64,
    pub assignment: Assignment,
    /// False when found by heuristic search (a lower bound).
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisalignmentReport {
    pub solo: Triple,
    pub relative: Triple,
    pub mis: f64,
    pub argmax_assignment: Assignment,
    pub exact: bool,
}

/// Below this a solo optimum counts as zero.
const ZERO_SOLO: f64 = 1e-12;

fn relative(value: f64, solo: f64) -> f64 {
    if solo <= ZERO_SOLO {
        1.0
    } else {
        (value / solo).clamp(0.0, 1.0)
    }
}

/// A feasible configuration with its priced chains and affine structure.
struct PriceModel<'c, 'e> {
    config: &'c Configuration<'e>,
    /// Reference prices: lower ends, or mid-range when prices are fixed.
    base: Vec<f64>,
    /// Adjustable chains: `(label, lo, hi)`.
    free: Vec<(usize, f64, f64)>,
    /// `slopes[j]` is the per-unit change of each stakeholder at chain `free[j]`.
    slopes: Vec<[f64; 3]>,
}

fn triple_of(a: &Aggregates) -> [f64; 3] {
    [a.app_raw_mean, a.op_raw_mean, a.sys_raw]
}

impl<'c, 'e> PriceModel<'c, 'e> {
    fn new(config: &'c Configuration<'e>) -> Self {
        let mid = config.evaluator().instance().extension_config.price_mode == PriceMode::MidRange;
        let mut base = config.prices().to_vec();
        let mut free = Vec::new();
        for v in config.views() {
            base[v.chain_id] = match v.price_interval {
                Some(iv) if mid => (iv.lo + iv.hi) / 2.0,
                Some(iv) => {
                    if iv.hi > iv.lo {
                        free.push((v.chain_id, iv.lo, iv.hi));
                    }
                    iv.lo
                }
                None => 0.0,
            };
        }
        let at_base = triple_of(&config.aggregates_at(&base));
        let slopes = free
            .iter()
            .map(|&(c, lo, hi)| {
                let mut p = base.clone();
                p[c] = hi;
                let up = triple_of(&config.aggregates_at(&p));
                [0, 1, 2].map(|k| (up[k] - at_base[k]) / (hi - lo))
            })
            .collect();
        Self { config, base, free, slopes }
    }

    fn evaluate(&self, prices: &[f64]) -> [f64; 3] {
        triple_of(&self.config.aggregates_at(prices))
    }

    /// Best prices for a single stakeholder: each chain to the end its slope
    /// favours, ties to the upper end.
    fn solo_prices(&self, k: usize) -> Vec<f64> {
        let mut p = self.base.clone();
        for (j, &(c, lo, hi)) in self.free.iter().enumerate() {
            p[c] = if self.slopes[j][k] < 0.0 { lo } else { hi };
        }
        p
    }

    /// Prices maximizing `min(1, min_k r_k)` over the active stakeholders.
    fn max_min_prices(&self, solo: &[f64; 3]) -> Vec<f64> {
        let active: Vec<usize> = (0..3).filter(|&k| solo[k] > ZERO_SOLO).collect();
        let mut p = self.base.clone();
        if active.is_empty() {
            return p;
        }
        // Coefficients of r_k(p) = c_k + Σ_j g_kj p_j for active k.
        let g: Vec<Vec<f64>> = active.iter().map(|&k| self.slopes.iter().map(|s| s[k] / solo[k]).collect()).collect();
        let mut conflicting = Vec::new();
        for (j, &(c, lo, hi)) in self.free.iter().enumerate() {
            let up = g.iter().any(|gk| gk[j] > 0.0);
            let down = g.iter().any(|gk| gk[j] < 0.0);
            match (up, down) {
                (true, true) => conflicting.push(j),
                (false, true) => p[c] = lo,
                _ => p[c] = hi,
            }
        }
        if conflicting.is_empty() {
            return p;
        }
        let c0: Vec<f64> = {
            let at = self.evaluate(&p);
            active.iter().map(|&k| at[k] / solo[k]).collect()
        };
        // Shift so conflicting coordinates are measured from their current value.
        let cur: Vec<f64> = conflicting.iter().map(|&j| p[self.free[j].0]).collect();
        let rows: Vec<Vec<f64>> = g.iter().map(|gk| conflicting.iter().map(|&j| gk[j]).collect()).collect();
        let boxes: Vec<(f64, f64)> = conflicting.iter().map(|&j| (self.free[j].1, self.free[j].2)).collect();
        let best = if conflicting.len() <= MAX_LP_CHAINS {
            lp_vertex_search(&c0, &rows, &cur, &boxes)
        } else {
            candidate_search(&c0, &rows, &cur, &boxes)
        };
        for (i, &j) in conflicting.iter().enumerate() {
            p[self.free[j].0] = best[i];
        }
        p
    }
}

/// Conflicting chains up to which the max-min price problem is solved by
/// exhaustive vertex enumeration.
const MAX_LP_CHAINS: usize = 10;

fn lp_value(c0: &[f64], rows: &[Vec<f64>], cur: &[f64], x: &[f64]) -> f64 {
    rows.iter()
        .zip(c0)
        .map(|(g, c)| c + g.iter().zip(x.iter().zip(cur)).map(|(gi, (xi, ci))| gi * (xi - ci)).sum::<f64>())
        .fold(1.0, f64::min)
}

/// Solves a small dense system with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Exact maximizer of `min(1, min_k r_k(x))` over a box. The optimum of the
/// equivalent LP sits at a vertex where some set `S` of the `t`-constraints
/// is tight and `|S| − 1` coordinates are interior; all other coordinates
/// sit at box ends. Every such vertex is enumerated.
fn lp_vertex_search(c0: &[f64], rows: &[Vec<f64>], cur: &[f64], boxes: &[(f64, f64)]) -> Vec<f64> {
    let m = boxes.len();
    // Constraint functions: the active r_k plus the constant cap 1.
    let mut funcs: Vec<(f64, Vec<f64>)> = rows
        .iter()
        .zip(c0)
        .map(|(g, c)| (c - g.iter().zip(cur).map(|(gi, ci)| gi * ci).sum::<f64>(), g.clone()))
        .collect();
    funcs.push((1.0, vec![0.0; m]));
    let nf = funcs.len();

    let mut best_x: Vec<f64> = cur.to_vec();
    let mut best_v = lp_value(c0, rows, cur, cur);
    let consider = |x: Vec<f64>, best_x: &mut Vec<f64>, best_v: &mut f64| {
        if x.iter().zip(boxes).any(|(xi, (lo, hi))| *xi < lo - 1e-12 || *xi > hi + 1e-12) {
            return;
        }
        let x: Vec<f64> = x.iter().zip(boxes).map(|(xi, (lo, hi))| xi.clamp(*lo, *hi)).collect();
        let v = lp_value(c0, rows, cur, &x);
        if v > *best_v + 1e-15 {
            *best_v = v;
            *best_x = x;
        }
    };

    for subset in 1u32..(1 << nf) {
        let tight: Vec<usize> = (0..nf).filter(|i| subset & (1 << i) != 0).collect();
        let free_n = tight.len() - 1;
        if free_n > m {
            continue;
        }
        for free_set in combinations(m, free_n) {
            let fixed: Vec<usize> = (0..m).filter(|i| !free_set.contains(i)).collect();
            for ends in 0u64..(1u64 << fixed.len()) {
                let mut x = vec![0.0; m];
                for (bit, &i) in fixed.iter().enumerate() {
                    x[i] = if ends & (1 << bit) != 0 { boxes[i].1 } else { boxes[i].0 };
                }
                if free_n == 0 {
                    consider(x, &mut best_x, &mut best_v);
                    continue;
                }
                // Unknowns: free coordinates then t. Equations: f_s(x) − t = 0.
                let mut a = Vec::with_capacity(tight.len());
                let mut b = Vec::with_capacity(tight.len());
                for &s in &tight {
                    let (c, g) = &funcs[s];
                    let mut row: Vec<f64> = free_set.iter().map(|&i| g[i]).collect();
                    row.push(-1.0);
                    a.push(row);
                    let fixed_part: f64 = fixed.iter().map(|&i| g[i] * x[i]).sum();
                    b.push(-(c + fixed_part));
                }
                if let Some(sol) = solve_linear(a, b) {
                    for (k, &i) in free_set.iter().enumerate() {
                        x[i] = sol[k];
                    }
                    consider(x, &mut best_x, &mut best_v);
                }
            }
        }
    }
    best_x
}

fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

/// Fallback for many conflicting chains: best of all-low, all-high and each
/// stakeholder's favoured corner.
fn candidate_search(c0: &[f64], rows: &[Vec<f64>], cur: &[f64], boxes: &[(f64, f64)]) -> Vec<f64> {
    let mut cands: Vec<Vec<f64>> = vec![boxes.iter().map(|b| b.0).collect(), boxes.iter().map(|b| b.1).collect()];
    for g in rows {
        cands.push(g.iter().zip(boxes).map(|(gi, b)| if *gi < 0.0 { b.0 } else { b.1 }).collect());
    }
    cands
        .into_iter()
        .map(|x| (lp_value(c0, rows, cur, &x), x))
        .fold((f64::NEG_INFINITY, Vec::new()), |acc, (v, x)| if v > acc.0 { (v, x) } else { acc })
        .1
}

fn exact_mode(instance: &Instance, config: &SolverConfig) -> bool {
    config.mode == SearchMode::Exact || check_cap(instance, config.enumeration_cap).is_ok()
}

/// Best raw utility of stakeholder `k` over feasible assignments. Exact
/// within the enumeration cap, heuristic beyond it.
pub fn solo_optimum(instance: &Instance, k: Stakeholder, config: &SolverConfig) -> Result<SoloOptimum> {
    let evaluator = Evaluator::new(instance, None, GovernanceWeights::default());
    let idx = k as usize;
    let score = |key: &CanonicalKey| {
        let config = evaluator.configure_unchecked(key.decode(instance.apps.len()));
        if !config.is_feasible() {
            return f64::NEG_INFINITY;
        }
        let model = PriceModel::new(&config);
        model.evaluate(&model.solo_prices(idx))[idx]
    };
    let exact = exact_mode(instance, config);
    if exact {
        check_cap(instance, config.enumeration_cap)?;
    }
    let ((value, key), _) =
        if exact { exhaustive_best(instance, config.exec, score) } else { search_keys(instance, config, None, score) };
    let cfg = evaluator.configure_unchecked(key.decode(instance.apps.len()));
    let prices = PriceModel::new(&cfg).solo_prices(idx);
    Ok(SoloOptimum { stakeholder: k, value, assignment: cfg.into_assignment().with_prices(prices), exact })
}

/// `r^k = U^k / U^k_*` clamped to `[0, 1]`, evaluated at the assignment's
/// own prices; a zero solo optimum gives `r^k = 1`.
pub fn relative_utilities(instance: &Instance, assignment: &Assignment, solo: &Triple) -> Result<Triple> {
    let evaluator = Evaluator::new(instance, None, GovernanceWeights::default());
    let config = evaluator.configure(assignment)?;
    let agg = config.aggregates();
    Ok(Triple::from_fn(|k| relative(k.of(&agg), solo.get(k))))
}

/// Solo optima, the max-min assignment `x*` with co-optimized prices, and
/// `mis = 1 − min_k r^k(x*)`.
pub fn misalignment_score(instance: &Instance, config: &SolverConfig) -> Result<MisalignmentReport> {
    let solos = Stakeholder::ALL.map(|k| solo_optimum(instance, k, config));
    let [app, op, sys] = solos;
    let (app, op, sys) = (app?, op?, sys?);
    let exact = app.exact && op.exact && sys.exact;
    let solo = Triple { app: app.value, op: op.value, sys: sys.value };
    let solo_arr = [solo.app, solo.op, solo.sys];

    let evaluator = Evaluator::new(instance, None, GovernanceWeights::default());
    let n_apps = instance.apps.len();
    let priced = |key: &CanonicalKey| -> Option<(f64, Vec<f64>)> {
        let config = evaluator.configure_unchecked(key.decode(n_apps));
        if !config.is_feasible() {
            return None;
        }
        let model = PriceModel::new(&config);
        let p = model.max_min_prices(&solo_arr);
        let at = model.evaluate(&p);
        let v = (0..3).map(|k| relative(at[k], solo_arr[k])).fold(1.0, f64::min);
        Some((v, p))
    };
    let score = |key: &CanonicalKey| priced(key).map_or(f64::NEG_INFINITY, |(v, _)| v);
    let ((_, key), _) =
        if exact { exhaustive_best(instance, config.exec, score) } else { search_keys(instance, config, None, score) };
    let (_, prices) = priced(&key).expect("the empty assignment is feasible");
    let argmax_assignment = key.decode(n_apps).with_prices(prices);
    let relative = relative_utilities(instance, &argmax_assignment, &solo)?;
    Ok(MisalignmentReport { solo, mis: 1.0 - relative.min(), relative, argmax_assignment, exact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{single_pair_instance, toy_example};

    fn cfg() -> SolverConfig {
        SolverConfig::exact()
    }

    #[test]
    fn toy_solo_optima() {
        let inst = toy_example();
        assert_eq!(solo_optimum(&inst, Stakeholder::Sys, &cfg()).unwrap().value, 1440.0);
        assert_eq!(solo_optimum(&inst, Stakeholder::App, &cfg()).unwrap().value, 75.0);
        assert_eq!(solo_optimum(&inst, Stakeholder::Op, &cfg()).unwrap().value, 18.0);
    }

    #[test]
    fn toy_misalignment() {
        let r = misalignment_score(&toy_example(), &cfg()).unwrap();
        assert!((r.mis - 0.2).abs() < 1e-9);
        assert!((r.relative.app - 0.8).abs() < 1e-12);
        assert_eq!((r.relative.op, r.relative.sys), (1.0, 1.0));
        assert_eq!(r.argmax_assignment.app_chain, vec![Some(0), None]);
        assert_eq!(r.argmax_assignment.op_chain, vec![Some(0), Some(0)]);
        assert_eq!(r.argmax_assignment.chain_prices, vec![12.0]);
    }

    #[test]
    fn compatible_pair_is_aligned() {
        assert_eq!(misalignment_score(&single_pair_instance(), &cfg()).unwrap().mis, 0.0);
    }

    #[test]
    fn empty_assignment_scores_zero() {
        let inst = toy_example();
        let solo = Triple { app: 75.0, op: 18.0, sys: 1440.0 };
        let r = relative_utilities(&inst, &Assignment::empty(2, 2), &solo).unwrap();
        assert_eq!((r.app, r.op, r.sys), (0.0, 0.0, 0.0));
    }

    #[test]
    fn vertex_search_balances_conflicting_types() {
        // r1 = x, r2 = 1 - x on [0, 1]: the max-min sits at x = 1/2.
        let x = lp_vertex_search(&[0.5, 0.5], &[vec![1.0], vec![-1.0]], &[0.5], &[(0.0, 1.0)]);
        assert!((x[0] - 0.5).abs() < 1e-12);
        // Capped at one: r1 = 2x, r2 = 2 - 2x, any x in [1/2, 1/2] works.
        let x = lp_vertex_search(&[1.0, 1.0], &[vec![2.0], vec![-2.0]], &[0.5], &[(0.0, 1.0)]);
        assert!((lp_value(&[1.0, 1.0], &[vec![2.0], vec![-2.0]], &[0.5], &x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conflicting_prices_are_co_optimized() {
        // Price-penalized apps lose from a high price while fees gain.
        let mut inst = single_pair_instance();
        inst.extension_config.app_utility_mode = crate::objective::AppUtilityMode::PricePenalized;
        let r = misalignment_score(&inst, &cfg()).unwrap();
        let p = r.argmax_assignment.chain_prices[0];
        assert!(p > 5.0 && p < 10.0, "price {p}");
        assert!((r.relative.app - r.relative.sys).abs() < 1e-9);
    }
}
