mod common;

use common::oracles::exhaustive_max_p;
use ridership::regionalization::{maxp, ContiguityGraph};

#[test]
fn fuzzed_feasibility_and_exhaustive_optimum() {
    common::criteria::maxp_feasibility(100, 100).unwrap();
}

#[test]
fn path_graph_optimum() {
    // Path 0-1-2-3-4-5 with unit loads and τ = 2: three pairs.
    let g = ContiguityGraph::from_edges(6, (0..5).map(|i| (i, i + 1)));
    let loads = [1.0; 6];
    assert_eq!(exhaustive_max_p(&g.adj, &loads, 2.0), 3);
    let part = maxp(&g, &loads, 2.0, 1).unwrap();
    assert_eq!(part.p, 3);
    assert!(part.is_feasible(&g, &loads));
}

#[test]
fn star_with_empty_hub() {
    // Every leaf meets τ alone; the zero-load hub joins one of them.
    let g = ContiguityGraph::from_edges(5, (1..5).map(|i| (0, i)));
    let loads = [0.0, 1.0, 1.0, 1.0, 1.0];
    assert_eq!(exhaustive_max_p(&g.adj, &loads, 1.0), 4);
    let part = maxp(&g, &loads, 1.0, 0).unwrap();
    assert!(part.is_feasible(&g, &loads));
    assert_eq!(part.p, 4);
}
