mod common;

use multichain::fairness::{compensation, sample_optimal_set, ExpectationMode};
use multichain::instances::{
    contested_instance, gen_uniform, single_pair_instance, swapped_pairs_instance, toy_example, UniformGenParams,
};
use multichain::misalignment::{misalignment_score, relative_utilities, solo_optimum, Stakeholder};
use multichain::search::near_optimal_keys;
use multichain::{GovernanceWeights, SolverConfig};

#[test]
fn symmetric_optima_compensation_is_zero_sum() {
    let inst = swapped_pairs_instance();
    let w = GovernanceWeights::APP;
    let sample = sample_optimal_set(&inst, None, w, &SolverConfig::exact(), 200).unwrap();
    let optima = common::optimal_served_gas(&inst, w, 1e-12);
    assert_eq!(sample.len(), optima.len());
    for m in &sample.members {
        let report = compensation(&sample, &m.solution, ExpectationMode::Uniform).unwrap();
        assert!(report.total().abs() < 1e-9);
        for (a, row) in report.rows.iter().enumerate() {
            let avg = optima.iter().map(|o| o[a]).sum::<f64>() / optima.len() as f64;
            assert_eq!(row.expected, avg);
        }
    }
}

#[test]
fn contested_operator_compensates_the_loser() {
    let inst = contested_instance();
    let w = GovernanceWeights::APP;
    let optima = near_optimal_keys(&inst, None, w, &SolverConfig::exact()).unwrap();
    assert_eq!(optima.len(), 2);
    let sample = sample_optimal_set(&inst, None, w, &SolverConfig::exact(), 50).unwrap();
    for m in &sample.members {
        let r = compensation(&sample, &m.solution, ExpectationMode::Uniform).unwrap();
        let comps: Vec<f64> = r.rows.iter().map(|r| r.comp).collect();
        assert!(comps == vec![50.0, -50.0] || comps == vec![-50.0, 50.0], "{comps:?}");
        assert_eq!(r.total(), 0.0);
    }
}

#[test]
fn frequency_weighting_is_zero_sum_when_totals_agree() {
    let inst = contested_instance();
    let sample = sample_optimal_set(&inst, None, GovernanceWeights::APP, &SolverConfig::exact(), 37).unwrap();
    let r = compensation(&sample, &sample.members[0].solution, ExpectationMode::Frequency).unwrap();
    assert!(r.total().abs() < 1e-9);
}

#[test]
fn single_pair_is_aligned() {
    let r = misalignment_score(&single_pair_instance(), &SolverConfig::exact()).unwrap();
    assert_eq!(r.mis, 0.0);
    assert!(r.exact);
}

#[test]
fn toy_misalignment_matches_brute_force() {
    let inst = toy_example();
    let r = misalignment_score(&inst, &SolverConfig::exact()).unwrap();
    let oracle = common::brute_force_misalignment(&inst);
    assert!((oracle - 0.2).abs() < 1e-9);
    assert!((r.mis - oracle).abs() < 1e-9);
    let rel = relative_utilities(&inst, &r.argmax_assignment, &r.solo).unwrap();
    assert!((1.0 - rel.min() - r.mis).abs() < 1e-12);
    assert_eq!(solo_optimum(&inst, Stakeholder::Sys, &SolverConfig::exact()).unwrap().value, 1440.0);
}

#[test]
fn misalignment_matches_brute_force_on_random_instances() {
    for seed in 0..25u64 {
        let inst = gen_uniform(&UniformGenParams {
            apps: 1 + seed as usize % 4,
            ops: 1 + seed as usize % 3,
            seed,
            ..Default::default()
        })
        .unwrap();
        let r = misalignment_score(&inst, &SolverConfig::exact()).unwrap();
        let oracle = common::brute_force_misalignment(&inst);
        assert!((r.mis - oracle).abs() < 1e-9, "seed {seed}: {} vs {oracle}", r.mis);
        assert!((0.0..=1.0).contains(&r.mis));
    }
}
