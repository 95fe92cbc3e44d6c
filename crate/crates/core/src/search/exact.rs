use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{Assignment, Instance};
use crate::objective::{EpochHistory, Evaluator, GovernanceWeights};
use crate::search::{better, build_solution, score_key, CanonicalKey, Provenance, Solution, SolverConfig};

/// Lexicographic odometer over canonical keys of length `n` whose chain
/// count stays within `cap`. Positions before `fixed` are held constant.
#[derive(Debug, Clone)]
pub struct KeyEnumerator {
    labels: Vec<u16>,
    cap: u16,
    fixed: usize,
    started: bool,
    done: bool,
}

impl KeyEnumerator {
    pub fn new(n: usize, cap: usize) -> Self {
        Self::with_prefix(n, cap, &[])
    }

    /// Enumerates completions of a canonical `prefix`.
    pub fn with_prefix(n: usize, cap: usize, prefix: &[u16]) -> Self {
        let mut labels = vec![0u16; n];
        labels[..prefix.len()].copy_from_slice(prefix);
        Self { labels, cap: cap.min(u16::MAX as usize) as u16, fixed: prefix.len(), started: false, done: false }
    }

    fn advance(&mut self) -> bool {
        let mut prefix_max = vec![0u16; self.labels.len() + 1];
        for (i, &x) in self.labels.iter().enumerate() {
            prefix_max[i + 1] = prefix_max[i].max(x);
        }
        for i in (self.fixed..self.labels.len()).rev() {
            let limit = (prefix_max[i] + 1).min(self.cap);
            if self.labels[i] < limit {
                self.labels[i] += 1;
                self.labels[i + 1..].iter_mut().for_each(|x| *x = 0);
                return true;
            }
        }
        false
    }
}

impl Iterator for KeyEnumerator {
    type Item = CanonicalKey;

    fn next(&mut self) -> Option<CanonicalKey> {
        if self.done {
            return None;
        }
        if self.started && !self.advance() {
            self.done = true;
            return None;
        }
        self.started = true;
        Some(CanonicalKey(self.labels.clone().into_boxed_slice()))
    }
}

pub(crate) fn check_cap(instance: &Instance, cap: usize) -> Result<()> {
    let agents = instance.agent_count();
    if agents > cap {
        return Err(Error::EnumerationCap { agents, cap });
    }
    Ok(())
}

pub fn enumerate_keys(instance: &Instance) -> KeyEnumerator {
    KeyEnumerator::new(instance.agent_count(), instance.chain_cap())
}

/// Every canonical joint assignment (partial and empty ones included), each
/// exactly once, with zero prices.
pub fn enumerate_assignments(instance: &Instance, cap: usize) -> Result<impl Iterator<Item = Assignment>> {
    check_cap(instance, cap)?;
    let n_apps = instance.apps.len();
    Ok(enumerate_keys(instance).map(move |k| k.decode(n_apps)))
}

/// Agents fixed per work unit when splitting the enumeration.
const SPLIT_DEPTH: usize = 4;

/// Runs `f` on disjoint subtrees covering the whole key space. The output
/// order follows the key order, so folding it left to right is
/// deterministic regardless of the executor.
pub(crate) fn map_subtrees<T: Send>(instance: &Instance, exec: Exec, f: impl Fn(KeyEnumerator) -> T + Sync) -> Vec<T> {
    let n = instance.agent_count();
    let cap = instance.chain_cap();
    let depth = SPLIT_DEPTH.min(n);
    let prefixes: Vec<CanonicalKey> = KeyEnumerator::new(depth, cap).collect();
    exec.map(&prefixes, |p| f(KeyEnumerator::with_prefix(n, cap, p.as_slice())))
}

/// Best key over the whole space under `score`, ties to the lowest key,
/// with the number of keys scored.
pub(crate) fn exhaustive_best(
    instance: &Instance,
    exec: Exec,
    score: impl Fn(&CanonicalKey) -> f64 + Sync,
) -> ((f64, CanonicalKey), usize) {
    let parts = map_subtrees(instance, exec, |keys| {
        let mut best: Option<(f64, CanonicalKey)> = None;
        let mut count = 0usize;
        for key in keys {
            count += 1;
            let v = score(&key);
            if best.as_ref().is_none_or(|(bv, bk)| better((v, &key), (*bv, bk))) {
                best = Some((v, key));
            }
        }
        (best, count)
    });
    let mut best: Option<(f64, CanonicalKey)> = None;
    let mut total = 0;
    for (part, count) in parts {
        total += count;
        if let Some((v, k)) = part {
            if best.as_ref().is_none_or(|(bv, bk)| better((v, &k), (*bv, bk))) {
                best = Some((v, k));
            }
        }
    }
    (best.expect("the empty assignment is always enumerated"), total)
}

/// Globally optimal assignment by exhaustive enumeration. Ties go to the
/// lowest canonical key.
pub fn solve_exact(
    instance: &Instance,
    history: Option<&EpochHistory>,
    weights: GovernanceWeights,
    config: &SolverConfig,
) -> Result<Solution> {
    check_cap(instance, config.enumeration_cap)?;
    let evaluator = Evaluator::try_new(instance, history, weights)?;
    let ((_, key), total) = exhaustive_best(instance, config.exec, |k| score_key(&evaluator, k));
    Ok(build_solution(&evaluator, key, total, Provenance::Exact))
}

/// All canonical keys whose optimal-price objective lies within
/// `max(epsilon * |best|, 1e-12)` of the best, in key order, with values.
pub fn near_optimal_keys(
    instance: &Instance,
    history: Option<&EpochHistory>,
    weights: GovernanceWeights,
    config: &SolverConfig,
) -> Result<Vec<(CanonicalKey, f64)>> {
    check_cap(instance, config.enumeration_cap)?;
    let evaluator = Evaluator::try_new(instance, history, weights)?;
    let slack = |best: f64| (config.epsilon * best.abs()).max(1e-12);
    let parts = map_subtrees(instance, config.exec, |keys| {
        let mut best = f64::NEG_INFINITY;
        let mut kept: Vec<(CanonicalKey, f64)> = Vec::new();
        for key in keys {
            let v = score_key(&evaluator, &key);
            if v > best {
                best = v;
                kept.retain(|(_, kv)| *kv >= best - slack(best));
            }
            if v >= best - slack(best) {
                kept.push((key, v));
            }
        }
        (best, kept)
    });
    let best = parts.iter().map(|(b, _)| *b).fold(f64::NEG_INFINITY, f64::max);
    Ok(parts.into_iter().flat_map(|(_, kept)| kept).filter(|(_, v)| *v >= best - slack(best)).collect())
}
