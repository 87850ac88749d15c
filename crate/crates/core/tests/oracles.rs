mod common;

use common::*;
use irpatch::aggreg::{aggregation_map, MAX_COEFFICIENT};
use irpatch::imgcore::Mask;

#[test]
fn aggregation_map_matches_graph_enumeration() {
    let gap = aggregation_oracle_gap(100);
    assert!(gap <= 1e-12, "max gap {gap:e}");
}

#[test]
fn all_ones_interior_is_three_sevenths() {
    let map = aggregation_map(&Mask::ones(12, 12), None).unwrap();
    assert_eq!(map.c.get(5, 6), 3.0 / 7.0);
    assert_eq!(MAX_COEFFICIENT, 3.0 / 7.0);
}

#[test]
fn kernel_on_decay_matrix_is_twice_the_edge_sum() {
    let gap = ring_identity_gap(1000);
    assert!(gap <= 1e-12, "max gap {gap:e}");
}
