//! Loader contracts checked against brute-force oracles over the raw edge
//! list, plus structural properties on generated graphs.

use std::collections::HashSet;

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ellagnn_core::graph::{NodeRecord, Split, TextAttributedGraph};

fn records(n: usize) -> Vec<NodeRecord> {
    (0..n)
        .map(|id| NodeRecord {
            id,
            text: format!("text {id}"),
            label: 0,
            split: Split::Train,
        })
        .collect()
}

fn random_edges(n: usize, p: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < p {
                edges.push((i, j)); // directed duplicates on purpose
            }
        }
    }
    edges
}

#[test]
fn degree_matches_edge_list_recount() {
    let n = 100;
    let edges = random_edges(n, 0.05, 42);
    let graph = TextAttributedGraph::from_parts(records(n), &edges).unwrap();

    // Oracle: distinct undirected partners per node, recounted from raw input.
    let mut partners: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for &(a, b) in &edges {
        if a != b {
            partners[a].insert(b);
            partners[b].insert(a);
        }
    }
    for v in 0..n {
        assert_eq!(graph.degree(v), partners[v].len(), "node {v}");
    }
}

#[test]
fn neighbors_match_edge_file_scan() {
    let dir = tempfile::tempdir().unwrap();
    let nodes_path = dir.path().join("nodes.jsonl");
    let edges_path = dir.path().join("edges.txt");

    let mut nodes_file = String::new();
    for r in records(30) {
        nodes_file.push_str(&serde_json::to_string(&r).unwrap());
        nodes_file.push('\n');
    }
    std::fs::write(&nodes_path, nodes_file).unwrap();

    let edges = random_edges(30, 0.1, 7);
    let mut edge_file = String::from("# header comment\n");
    for (a, b) in &edges {
        edge_file.push_str(&format!("{a} {b}\n"));
    }
    edge_file.push_str("   \n"); // blank line is fine
    std::fs::write(&edges_path, edge_file).unwrap();

    let graph = TextAttributedGraph::load(&nodes_path, &edges_path).unwrap();
    for v in 0..30 {
        let mut expect: Vec<usize> = edges
            .iter()
            .flat_map(|&(a, b)| {
                if a == v && b != v {
                    Some(b)
                } else if b == v && a != v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        expect.sort_unstable();
        expect.dedup();
        assert_eq!(graph.neighbors(v), expect.as_slice(), "node {v}");
    }
}

#[test]
fn canonical_form_reloads_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let edges = random_edges(40, 0.08, 3);
    let graph = TextAttributedGraph::from_parts(records(40), &edges).unwrap();

    let n1 = dir.path().join("nodes1.jsonl");
    let e1 = dir.path().join("edges1.txt");
    graph.write_canonical(&n1, &e1).unwrap();
    let reloaded = TextAttributedGraph::load(&n1, &e1).unwrap();
    let (off_a, cols_a) = graph.csr_parts();
    let (off_b, cols_b) = reloaded.csr_parts();
    assert_eq!(off_a, off_b);
    assert_eq!(cols_a, cols_b);

    // Emitting again yields byte-identical files.
    let n2 = dir.path().join("nodes2.jsonl");
    let e2 = dir.path().join("edges2.txt");
    reloaded.write_canonical(&n2, &e2).unwrap();
    assert_eq!(std::fs::read(&n1).unwrap(), std::fs::read(&n2).unwrap());
    assert_eq!(std::fs::read(&e1).unwrap(), std::fs::read(&e2).unwrap());
}

#[test]
fn parse_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let nodes_path = dir.path().join("nodes.jsonl");
    let edges_path = dir.path().join("edges.txt");
    let mut nodes_file = String::new();
    for r in records(2) {
        nodes_file.push_str(&serde_json::to_string(&r).unwrap());
        nodes_file.push('\n');
    }
    std::fs::write(&nodes_path, &nodes_file).unwrap();
    std::fs::write(&edges_path, "0 1\n0 not-a-number\n").unwrap();
    let err = TextAttributedGraph::load(&nodes_path, &edges_path).unwrap_err();
    assert!(err.to_string().contains("edges.txt:2"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adjacency_is_symmetric_and_degree_sums_to_twice_edges(
        n in 2usize..40,
        edges in proptest::collection::vec((0usize..40, 0usize..40), 0..120),
        ) {
        let edges: Vec<(usize, usize)> =
            edges.into_iter().map(|(a, b)| (a % n, b % n)).collect();
        let graph = TextAttributedGraph::from_parts(records(n), &edges).unwrap();
        for i in 0..n {
            for &j in graph.neighbors(i) {
                prop_assert!(graph.neighbors(j).binary_search(&i).is_ok());
            }
            let row = graph.neighbors(i);
            for w in row.windows(2) {
                prop_assert!(w[0] < w[1], "strictly increasing columns");
            }
            prop_assert!(!row.contains(&i), "no self loops");
        }
        let degree_sum: usize = (0..n).map(|v| graph.degree(v)).sum();
        prop_assert_eq!(degree_sum, 2 * graph.num_edges());
    }
}
