mod common;

use cipher_sim::corpus::RowMatrix;
use cipher_sim::graphsim::{
    cluster_entropy, csi_from_curve, girvan_newman_trace, global_entropy, mutual_knn, Edge,
    MutualKnnGraph, RemovalRule,
};
use cipher_sim::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

fn graph_from(n: usize, edges: &[(usize, usize)], labels: Vec<usize>) -> MutualKnnGraph {
    let mut edges: Vec<Edge> = edges
        .iter()
        .map(|&(u, v)| Edge { u, v, weight: 1.0 })
        .collect();
    edges.sort_by_key(|e| (e.u, e.v));
    MutualKnnGraph {
        node_count: n,
        k: 1,
        edges,
        labels,
    }
}

#[test]
fn removal_order_matches_brute_force() {
    let mut rng = seeded(11);
    for _ in 0..60 {
        let n = rng.random_range(2..=12);
        let p = rng.random_range(0.15..0.8);
        let edges = common::random_graph(&mut rng, n, p);
        let labels = (0..n).map(|i| i % 2).collect();
        let g = graph_from(n, &edges, labels);
        let trace = girvan_newman_trace(&g, n, RemovalRule::Betweenness).unwrap();
        assert_eq!(
            trace.removed,
            common::brute_girvan_newman_order(n, &edges),
            "graph {edges:?}"
        );
    }
}

#[test]
fn symmetric_graphs_break_ties_lexicographically() {
    // A 6-cycle: every edge has the same betweenness.
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)];
    let g = graph_from(6, &edges, vec![0, 1, 0, 1, 0, 1]);
    let trace = girvan_newman_trace(&g, 6, RemovalRule::Betweenness).unwrap();
    assert_eq!(trace.removed, common::brute_girvan_newman_order(6, &edges));
    assert_eq!(trace.removed[0], (0, 1));
}

#[test]
fn mutual_knn_matches_brute_force() {
    let mut rng = seeded(3);
    for case in 0..60 {
        let n = rng.random_range(3..=300);
        let dim = rng.random_range(1..=6);
        // Every other case lives on a small integer lattice to force ties.
        let lattice = case % 2 == 0;
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..dim)
                    .map(|_| {
                        if lattice {
                            rng.random_range(0..4) as f64
                        } else {
                            rng.random::<f64>()
                        }
                    })
                    .collect()
            })
            .collect();
        let k = rng.random_range(1..n.min(15));
        let g = mutual_knn(&RowMatrix::from_rows(&pts).unwrap(), &vec![0; n], k).unwrap();
        let got: std::collections::BTreeSet<(usize, usize)> =
            g.edges.iter().map(|e| (e.u, e.v)).collect();
        assert_eq!(got, common::brute_mutual_knn(&pts, k));
        for e in &g.edges {
            let d: f64 = pts[e.u]
                .iter()
                .zip(&pts[e.v])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            assert_eq!(e.weight, d.sqrt());
        }
    }
}

#[test]
fn entropy_closed_forms() {
    assert!((cluster_entropy(&[4]).unwrap() - 0.0).abs() < 1e-12);
    assert!((cluster_entropy(&[2, 2]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    assert!((cluster_entropy(&[3, 1]).unwrap() - 0.562335).abs() < 1e-6);
    assert!((cluster_entropy(&[3, 1]).unwrap() - common::entropy_of(&[3.0, 1.0])).abs() < 1e-12);
}

proptest! {
    #[test]
    fn entropy_is_bounded(counts in prop::collection::vec(0usize..50, 1..6)) {
        prop_assume!(counts.iter().sum::<usize>() > 0);
        let h = cluster_entropy(&counts).unwrap();
        let nonzero = counts.iter().filter(|&&c| c > 0).count();
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (nonzero as f64).ln() + 1e-12);
    }

    #[test]
    fn global_entropy_is_weighted_mean(
        pairs in prop::collection::vec((0usize..4, 0usize..2), 1..60)
    ) {
        let assignment: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let mut expected = 0.0;
        for c in 0..4 {
            let counts = [0, 1].map(|l| pairs.iter().filter(|p| p.0 == c && p.1 == l).count() as f64);
            let size: f64 = counts.iter().sum();
            if size > 0.0 {
                expected += size / pairs.len() as f64 * common::entropy_of(&counts);
            }
        }
        prop_assert!((global_entropy(&assignment, &labels).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn csi_is_bounded(curve in prop::collection::vec(-1.0f64..2.0, 2..60), h in 0.01f64..1.0) {
        let s = csi_from_curve(&curve, h).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.normalized));
    }

    #[test]
    fn splits_add_one_cluster(seed in 0u64..500) {
        let mut rng = seeded(seed);
        let n = rng.random_range(2..=10);
        let edges = common::random_graph(&mut rng, n, 0.5);
        let g = graph_from(n, &edges, (0..n).map(|i| i % 2).collect());
        let trace = girvan_newman_trace(&g, n + 2, RemovalRule::Betweenness).unwrap();
        prop_assert_eq!(trace.steps.len(), n + 3);
        for w in trace.steps.windows(2) {
            if !w[1].padded {
                prop_assert_eq!(w[1].clusters, w[0].clusters + 1);
            }
            prop_assert!(w[1].global_entropy <= w[0].global_entropy + 1e-12);
        }
    }
}

#[test]
fn csi_anchors() {
    let h = std::f64::consts::LN_2;
    assert!((csi_from_curve(&[h; 51], h).unwrap().normalized - 1.0).abs() < 1e-12);
    assert_eq!(csi_from_curve(&[0.0; 51], h).unwrap().normalized, 0.0);
    let linear: Vec<f64> = (0..=50).map(|i| h * (1.0 - i as f64 / 50.0)).collect();
    assert!((csi_from_curve(&linear, h).unwrap().normalized - 0.5).abs() < 1e-9);
}
