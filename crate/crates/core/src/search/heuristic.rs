use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{Assignment, Instance};
use crate::objective::{EpochHistory, Evaluator, GovernanceWeights};
use crate::search::{
    better, build_solution, canonicalize, score_key, CanonicalKey, Provenance, Solution, SolverConfig,
};

/// Iterations per restart are capped at this multiple of its evaluation
/// budget, so a fully memoized neighbourhood cannot spin forever.
const ITERATION_FACTOR: usize = 50;

/// Canonical key of a warm start, with agents on chains beyond the chain
/// cap dropped.
fn warm_key(instance: &Instance, warm: &Assignment) -> CanonicalKey {
    let n = instance.agent_count();
    let cap = instance.chain_cap() as u16;
    let mut raw: Vec<u16> = if warm.app_chain.len() == instance.apps.len() && warm.op_chain.len() == instance.ops.len()
    {
        canonicalize(warm).0.into_vec()
    } else {
        vec![0; n]
    };
    for x in &mut raw {
        if *x > cap {
            *x = 0;
        }
    }
    CanonicalKey::from_raw(raw)
}

fn random_key(n: usize, cap: u16, rng: &mut ChaCha8Rng) -> CanonicalKey {
    let mut raw = Vec::with_capacity(n);
    let mut used = 0u16;
    for _ in 0..n {
        let top = (used + 1).min(cap);
        let x = rng.random_range(0..=top);
        used = used.max(x);
        raw.push(x);
    }
    CanonicalKey::from_raw(raw)
}

/// Relabels each agent with probability `rate` (at least one agent) to
/// unassigned, another existing chain, or a fresh chain when below the cap.
fn mutate(key: &CanonicalKey, cap: u16, rate: f64, rng: &mut ChaCha8Rng) -> CanonicalKey {
    let n = key.len();
    let mut raw = key.0.to_vec();
    let used = key.chain_count() as u16;
    let top = if used < cap { used + 1 } else { used };
    let forced = rng.random_range(0..n);
    for (i, x) in raw.iter_mut().enumerate() {
        if i != forced && !rng.random_bool(rate) {
            continue;
        }
        if top == 0 {
            continue;
        }
        // Uniform over {0..=top} minus the current label.
        let mut y = rng.random_range(0..top);
        if y >= *x {
            y += 1;
        }
        *x = y;
    }
    CanonicalKey::from_raw(raw)
}

struct RestartResult {
    best: (f64, CanonicalKey),
    evaluations: usize,
}

fn run_restart(
    n: usize,
    cap: u16,
    config: &SolverConfig,
    restart: usize,
    budget: usize,
    start: Option<&CanonicalKey>,
    score: &(impl Fn(&CanonicalKey) -> f64 + Sync),
) -> RestartResult {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(restart as u64 + 1);

    let initial = match (restart, start) {
        (0, Some(k)) => k.clone(),
        (r, _) if r % 2 == 0 && r > 0 => random_key(n, cap, &mut rng),
        _ => CanonicalKey(vec![0; n].into_boxed_slice()),
    };
    let mut memo: HashMap<CanonicalKey, f64> = HashMap::new();
    let mut evaluations = 0usize;
    let mut eval = |key: &CanonicalKey, evaluations: &mut usize| -> f64 {
        if let Some(&v) = memo.get(key) {
            return v;
        }
        *evaluations += 1;
        let v = score(key);
        memo.insert(key.clone(), v);
        v
    };

    let mut current_v = eval(&initial, &mut evaluations);
    let mut current = initial;
    let mut best = (current_v, current.clone());
    if n == 0 {
        return RestartResult { best, evaluations };
    }
    let rate = config.mutation_rate.unwrap_or(1.0 / n as f64);
    let mut iterations = 0;
    while evaluations < budget && iterations < ITERATION_FACTOR * budget {
        iterations += 1;
        let candidate = mutate(&current, cap, rate, &mut rng);
        let v = eval(&candidate, &mut evaluations);
        if better((v, &candidate), (best.0, &best.1)) {
            best = (v, candidate.clone());
        }
        if v >= current_v {
            current_v = v;
            current = candidate;
        }
    }
    RestartResult { best, evaluations }
}

/// Best key found by the restarted mutation search under `score`, and the
/// number of (memo-missing) evaluations spent.
pub(crate) fn search_keys(
    instance: &Instance,
    config: &SolverConfig,
    start: Option<&CanonicalKey>,
    score: impl Fn(&CanonicalKey) -> f64 + Sync,
) -> ((f64, CanonicalKey), usize) {
    let n = instance.agent_count();
    let cap = instance.chain_cap() as u16;
    let restarts = config.restarts;
    let results = config.exec.map_range(restarts, |r| {
        let share = config.budget / restarts + usize::from(r < config.budget % restarts);
        run_restart(n, cap, config, r, share.max(1), start, &score)
    });
    let evaluations = results.iter().map(|r| r.evaluations).sum();
    let mut best = results[0].best.clone();
    for r in &results[1..] {
        if better((r.best.0, &r.best.1), (best.0, &best.1)) {
            best = r.best.clone();
        }
    }
    (best, evaluations)
}

/// Memoized (1+1)-style search with restarts. Restart `r` uses its own RNG
/// stream and memo, so the result does not depend on scheduling. Restart 0
/// starts from the warm start when one is given, so the result is never
/// worse than it.
pub fn solve_heuristic(
    instance: &Instance,
    history: Option<&EpochHistory>,
    weights: GovernanceWeights,
    config: &SolverConfig,
    warm_start: Option<&Assignment>,
) -> Result<Solution> {
    config.validate()?;
    let evaluator = Evaluator::try_new(instance, history, weights)?;
    let start = warm_start.map(|w| warm_key(instance, w));
    let (best, evaluations) = search_keys(instance, config, start.as_ref(), |k| score_key(&evaluator, k));
    let provenance = if start.as_ref() == Some(&best.1) { Provenance::WarmStart } else { Provenance::Heuristic };
    Ok(build_solution(&evaluator, best.1, evaluations, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Exec;
    use crate::instances::toy_example;
    use crate::search::solve_exact;

    #[test]
    fn mutation_stays_canonical_and_capped() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut key = CanonicalKey(vec![0; 6].into_boxed_slice());
        for _ in 0..2000 {
            key = mutate(&key, 2, 0.3, &mut rng);
            assert!(key.chain_count() <= 2);
            assert_eq!(CanonicalKey::from_raw(key.0.to_vec()), key);
        }
    }

    #[test]
    fn finds_toy_optimum() {
        let inst = toy_example();
        let cfg = SolverConfig { budget: 500, ..Default::default() };
        for w in [GovernanceWeights::APP, GovernanceWeights::OP, GovernanceWeights::SYS] {
            let h = solve_heuristic(&inst, None, w, &cfg, None).unwrap();
            let e = solve_exact(&inst, None, w, &SolverConfig::exact()).unwrap();
            assert!((h.objective() - e.objective()).abs() < 1e-12);
        }
    }

    #[test]
    fn scheduling_does_not_change_the_result() {
        let inst = toy_example();
        let seq = SolverConfig { budget: 300, seed: 11, exec: Exec::Sequential, ..Default::default() };
        let par = SolverConfig { exec: Exec::Parallel, ..seq.clone() };
        let a = solve_heuristic(&inst, None, GovernanceWeights::default(), &seq, None).unwrap();
        let b = solve_heuristic(&inst, None, GovernanceWeights::default(), &par, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn memo_skips_relabeled_duplicates() {
        // Four canonical keys in total; a large budget cannot use more.
        let inst = crate::instances::single_pair_instance();
        let cfg = SolverConfig { budget: 1000, restarts: 1, ..Default::default() };
        let s = solve_heuristic(&inst, None, GovernanceWeights::SYS, &cfg, None).unwrap();
        assert!(s.evaluations_used <= 4);
    }
}
