mod common;

#[test]
fn inner_solve_matches_grid_search_core() {
    for case in common::price_cases(15, 7, false) {
        let gap = common::price_solve_gap(&case, 10_000);
        assert!(gap.abs() <= 1e-9, "gap {gap}");
    }
}

#[test]
fn inner_solve_matches_grid_search_with_degradation() {
    for case in common::price_cases(15, 8, true) {
        let gap = common::price_solve_gap(&case, 10_000);
        assert!(gap.abs() <= 1e-9, "gap {gap}");
    }
}
