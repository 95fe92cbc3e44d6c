//! Named instances, seeded generators and the governance simplex grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Application, Instance, Operator};
use crate::objective::{AppUtilityMode, Bounds, GovernanceWeights, PriceMode};

/// Two applications and two operators: a high-stake, low-floor operator
/// `o_H` and a low-stake, high-floor operator `o_L`.
pub fn toy_example() -> Instance {
    Instance::new(
        vec![Application::new("a1", 120.0, 60.0, 12.0), Application::new("a2", 80.0, 20.0, 8.0)],
        vec![Operator::new("o_H", 150.0, 60.0, 6.0), Operator::new("o_L", 150.0, 20.0, 9.0)],
    )
}

/// One application and one operator that fit each other with slack.
pub fn single_pair_instance() -> Instance {
    Instance::new(vec![Application::new("a", 100.0, 10.0, 10.0)], vec![Operator::new("o", 100.0, 10.0, 5.0)])
}

/// Two applications with opposite capability needs competing for one
/// indifferent operator. Under application weights the operator can serve
/// either one, giving two optima with opposite winners.
pub fn contested_instance() -> Instance {
    let mut a1 = Application::new("a1", 100.0, 10.0, 10.0);
    a1.capabilities = vec![1];
    let mut a2 = Application::new("a2", 100.0, 10.0, 10.0);
    a2.capabilities = vec![0];
    let mut o = Operator::new("o", 100.0, 10.0, 5.0);
    o.capabilities = vec![-1];
    let mut inst = Instance::new(vec![a1, a2], vec![o]);
    inst.capability_dims = 1;
    inst
}

/// Two identical applications and two identical operators, each operator
/// sized for one application. The two pairings are distinct optima.
pub fn swapped_pairs_instance() -> Instance {
    Instance::new(
        vec![Application::new("a1", 100.0, 10.0, 10.0), Application::new("a2", 100.0, 10.0, 10.0)],
        vec![Operator::new("o1", 100.0, 10.0, 5.0), Operator::new("o2", 100.0, 10.0, 5.0)],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnobInstanceParams {
    pub demand: f64,
    pub p_max: f64,
    /// Price-spread knob: the high-floor operator asks `kappa * p_max`.
    pub kappa: f64,
    /// Stake-skew knob: stake share of the high-floor operator.
    pub sigma: f64,
    pub capacity: f64,
}

impl Default for KnobInstanceParams {
    fn default() -> Self {
        Self { demand: 100.0, p_max: 10.0, kappa: 0.3, sigma: 0.9, capacity: 50.0 }
    }
}

/// The governance-control instance: one application, a high-floor operator
/// `o_H` holding stake `sigma` and two zero-floor operators splitting the
/// rest. Prices are mid-range and the application utility is
/// price-penalized.
pub fn knob_instance(params: KnobInstanceParams) -> Result<Instance> {
    let KnobInstanceParams { demand, p_max, kappa, sigma, capacity } = params;
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::InvalidParams(format!("kappa must lie in (0, 1], got {kappa}")));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidParams(format!("sigma must lie in (0, 1), got {sigma}")));
    }
    if !(demand > 0.0 && p_max > 0.0 && capacity > 0.0) {
        return Err(Error::InvalidParams("demand, p_max and capacity must be positive".into()));
    }
    let low_stake = (1.0 - sigma) / 2.0;
    // The smallest operator stake, so the stake constraint never binds.
    let app_stake = low_stake.min(sigma);
    let mut inst = Instance::new(
        vec![Application::new("a", demand, app_stake, p_max)],
        vec![
            Operator::new("o_H", capacity, sigma, kappa * p_max),
            Operator::new("o_L1", capacity, low_stake, 0.0),
            Operator::new("o_L2", capacity, low_stake, 0.0),
        ],
    );
    let q_sys = demand * p_max;
    inst.norm_bounds.sys_base = Some(Bounds::new(0.0, q_sys));
    // Yield peaks when all fees go to the smallest stake.
    inst.norm_bounds.op_final = Some(Bounds::new(0.0, q_sys / low_stake.min(sigma)));
    inst.extension_config.price_mode = PriceMode::MidRange;
    inst.extension_config.app_utility_mode = AppUtilityMode::PricePenalized;
    inst.metadata.insert("kappa".into(), kappa);
    inst.metadata.insert("sigma".into(), sigma);
    Ok(inst)
}

/// Ranges for [`gen_uniform`]; every range is inclusive `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformGenParams {
    pub apps: usize,
    pub ops: usize,
    pub app_gas: (f64, f64),
    pub op_gas: (f64, f64),
    pub app_stake: (f64, f64),
    pub op_stake: (f64, f64),
    pub app_price: (f64, f64),
    pub op_price: (f64, f64),
    pub seed: u64,
}

impl Default for UniformGenParams {
    fn default() -> Self {
        Self {
            apps: 4,
            ops: 3,
            app_gas: (10.0, 100.0),
            op_gas: (20.0, 150.0),
            app_stake: (1.0, 10.0),
            op_stake: (1.0, 10.0),
            app_price: (5.0, 15.0),
            op_price: (1.0, 10.0),
            seed: 0,
        }
    }
}

impl UniformGenParams {
    fn ranges(&self) -> [(&'static str, (f64, f64)); 6] {
        [
            ("app_gas", self.app_gas),
            ("op_gas", self.op_gas),
            ("app_stake", self.app_stake),
            ("op_stake", self.op_stake),
            ("app_price", self.app_price),
            ("op_price", self.op_price),
        ]
    }
}

/// Seeded instance with declarations drawn uniformly from the ranges.
/// Extensions stay at their neutral defaults.
pub fn gen_uniform(params: &UniformGenParams) -> Result<Instance> {
    for (name, (lo, hi)) in params.ranges() {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidParams(format!("range {name} = [{lo}, {hi}] must be positive and ordered")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut draw = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let apps = (0..params.apps)
        .map(|i| {
            Application::new(
                format!("a{}", i + 1),
                draw(params.app_gas),
                draw(params.app_stake),
                draw(params.app_price),
            )
        })
        .collect();
    let ops = (0..params.ops)
        .map(|i| {
            Operator::new(format!("o{}", i + 1), draw(params.op_gas), draw(params.op_stake), draw(params.op_price))
        })
        .collect();
    Ok(Instance::new(apps, ops))
}

/// All `(i/n, j/n, k/n)` with `i + j + k = n`, ordered by `i` then `j`.
pub fn simplex_grid(resolution: usize) -> Result<Vec<GovernanceWeights>> {
    if resolution == 0 {
        return Err(Error::InvalidParams("simplex resolution must be at least 1".into()));
    }
    let n = resolution as f64;
    let mut out = Vec::with_capacity((resolution + 1) * (resolution + 2) / 2);
    for i in 0..=resolution {
        for j in 0..=resolution - i {
            let k = resolution - i - j;
            out.push(GovernanceWeights { lambda_app: i as f64 / n, lambda_op: j as f64 / n, lambda_sys: k as f64 / n });
        }
    }
    Ok(out)
}
