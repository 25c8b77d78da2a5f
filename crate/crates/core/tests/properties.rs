mod support;

macro_rules! property_tests {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                let (_, check) = support::suite()
                    .into_iter()
                    .find(|(n, _)| *n == stringify!($name))
                    .expect("property registered in the suite");
                if let Err(e) = check() {
                    panic!("{e}");
                }
            }
        )*
    };
}

property_tests!(
    occupancy_monotone,
    miss_prob_monotone,
    miss_prob_limits,
    domain_delay_monotone,
    publisher_load_scaling,
    insertion_below_miss_rate,
    stateless_delay_matches_quadrature,
    preselected_equals_power,
    allocations_sum_to_budget,
    square_root_scale_invariant,
    knapsack_kkt,
    bang_bang_is_grid_argmin,
    objective_limits,
    more_budget_never_hurts,
    objective_matches_reevaluation,
    simulation_is_deterministic,
    pasta_consistency,
    flow_balance,
    walk_structure,
    counters_move_only_on_arrivals,
    multi_tier_filtering_identity,
    csv_round_trip,
    scenario_defaults,
    exit_codes,
);

#[test]
fn every_suite_entry_has_a_test() {
    assert_eq!(support::suite().len(), 24);
}
