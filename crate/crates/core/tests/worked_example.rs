use multichain::instances::toy_example;
use multichain::model::{check_feasibility, derive_chain_views};
use multichain::objective::{global_objective, op_yield, sys_base_utility};
use multichain::pricing::solve_all_prices;
use multichain::search::solve_exact;
use multichain::{Assignment, GovernanceWeights, SolverConfig};

const GOLDEN_TOY: &str = include_str!("data/toy_example.json");

#[test]
fn toy_json_is_stable() {
    let mut json = toy_example().to_json_pretty().unwrap();
    json.push('\n');
    assert_eq!(json, GOLDEN_TOY);
    let parsed = multichain::Instance::from_json(GOLDEN_TOY).unwrap();
    assert_eq!(parsed, toy_example());
}

#[test]
fn assignment_a_both_apps_with_high_stake_operator() {
    let inst = toy_example();
    let a = Assignment::from_labels(vec![Some(0), Some(0)], vec![Some(0), None]).with_prices(vec![8.0]);
    let views = derive_chain_views(&inst, &a).unwrap();
    let iv = views[0].price_interval.unwrap();
    assert_eq!((iv.lo, iv.hi), (6.0, 8.0));
    assert_eq!(views[0].demand, 200.0);
    assert_eq!(views[0].supply, 150.0);
    let r = global_objective(&inst, &a, None, GovernanceWeights::default()).unwrap();
    let served: Vec<f64> = r.app_utilities.iter().map(|u| u.base).collect();
    assert_eq!(served, vec![90.0, 60.0]);
    assert_eq!(sys_base_utility(&views), 1200.0);
    assert_eq!(op_yield(&views, 0), 20.0);
    assert!(check_feasibility(&inst, &a).feasible);
}

#[test]
fn assignment_b_high_value_app_alone() {
    let inst = toy_example();
    let b = Assignment::from_labels(vec![Some(0), None], vec![Some(0), None]).with_prices(vec![12.0]);
    let views = derive_chain_views(&inst, &b).unwrap();
    let iv = views[0].price_interval.unwrap();
    assert_eq!((iv.lo, iv.hi), (6.0, 12.0));
    assert_eq!(views[0].gas_processed, 120.0);
    assert_eq!(sys_base_utility(&views), 1440.0);
    assert_eq!(op_yield(&views, 0), 24.0);
    // The inner price solve lands on the same price under system weights.
    let p = solve_all_prices(&inst, &b, None, GovernanceWeights::SYS).unwrap();
    assert_eq!(p, vec![12.0]);
}

#[test]
fn exact_optima_for_vertex_weights() {
    let inst = toy_example();
    let cfg = SolverConfig::exact();
    let sys = solve_exact(&inst, None, GovernanceWeights::SYS, &cfg).unwrap();
    assert!((sys.report.sys_utility.fees - 1440.0).abs() < 1e-9);

    let app = solve_exact(&inst, None, GovernanceWeights::APP, &cfg).unwrap();
    let mean: f64 = app.report.app_utilities.iter().map(|u| u.base).sum::<f64>() / 2.0;
    assert!((mean - 75.0).abs() < 1e-9);
    let asg = &app.assignment;
    assert!(asg.app_chain[0].is_some() && asg.app_chain[0] == asg.app_chain[1]);
    assert_eq!(asg.op_chain[0], asg.app_chain[0]);
}

#[test]
fn incompatible_pair_has_empty_interval() {
    let inst = toy_example();
    let x = Assignment::from_labels(vec![None, Some(0)], vec![None, Some(0)]);
    assert!(matches!(
        solve_all_prices(&inst, &x, None, GovernanceWeights::SYS),
        Err(multichain::Error::EmptyInterval { lo, hi, .. }) if lo == 9.0 && hi == 8.0
    ));
}
