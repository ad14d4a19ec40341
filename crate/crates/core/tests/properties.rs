mod common;

use common::*;

fn check(suite: fn(&mut proptest::test_runner::TestRunner) -> Result<(), String>) {
    if let Err(e) = suite(&mut runner()) {
        panic!("{e}");
    }
}

#[test]
fn csr_matches_edge_list() {
    check(prop_csr_consistency);
}

#[test]
fn graph_directory_round_trip() {
    check(prop_io_round_trip);
}

#[test]
fn homophily_measures_in_range() {
    check(prop_homophily_ranges);
}

#[test]
fn fully_homophilous_generator() {
    check(prop_pure_homophily_generator);
}

#[test]
fn edge_distributions_sum_to_one() {
    check(prop_distributions_normalized);
}

#[test]
fn resistances_sum_to_rank() {
    check(prop_foster);
}

#[test]
fn partition_covers_graph() {
    check(prop_partition_cover);
}

#[test]
fn normalized_scores_sum_to_one() {
    check(prop_normalize);
}

#[test]
fn augmented_distribution() {
    check(prop_augmentation);
}

#[test]
fn draws_are_distinct_and_reproducible() {
    check(prop_sampling);
}

#[test]
fn scores_open_interval_and_rows_stochastic() {
    check(prop_scores_and_predictions);
}

#[test]
fn weighted_loss_sum() {
    check(prop_loss_combination);
}

#[test]
fn f1_in_unit_interval() {
    check(prop_f1_bounds);
}

#[test]
fn temperature_schedule() {
    check(prop_annealing);
}

#[test]
fn adam_shapes_and_zero_gradient() {
    check(prop_adam);
}

#[test]
fn training_is_deterministic() {
    check(prop_training_determinism);
}

#[test]
fn checkpoint_reload_is_exact() {
    check(prop_checkpoint_round_trip);
}
