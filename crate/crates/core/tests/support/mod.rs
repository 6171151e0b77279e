//! Fixtures and brute-force oracles shared by the integration tests and the
//! acceptance harness.
#![allow(dead_code)]

use agformer::graph::{encode_bundle, synth_random_graph, DatasetBundle, Graph};
use agformer::Tensor;

pub fn plain(n: usize, edges: &[(usize, usize)]) -> Graph {
    Graph::from_edges(n, edges, Tensor::zeros(n, 1), 0).unwrap()
}

/// Two triangles joined by the edge 2-3.
pub fn bridged_triangles() -> Graph {
    plain(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)])
}

/// Named graphs with at most eight nodes, all with at least one edge.
pub fn small_graphs() -> Vec<(String, Graph)> {
    let mut out = vec![
        ("edge".to_string(), plain(2, &[(0, 1)])),
        ("path4".to_string(), plain(4, &[(0, 1), (1, 2), (2, 3)])),
        ("star5".to_string(), plain(5, &[(0, 1), (0, 2), (0, 3), (0, 4)])),
        ("cycle6".to_string(), plain(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)])),
        ("bridged_triangles".to_string(), bridged_triangles()),
        ("two_triangles".to_string(), plain(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])),
        (
            "k5".to_string(),
            plain(5, &(0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j))).collect::<Vec<_>>()),
        ),
        (
            "barbell8".to_string(),
            plain(
                8,
                &[
                    (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3),
                    (4, 5), (4, 6), (4, 7), (5, 6), (5, 7), (6, 7),
                    (3, 4),
                ],
            ),
        ),
        ("isolated_node".to_string(), plain(5, &[(0, 1), (1, 2), (2, 0), (3, 1)])),
    ];
    for seed in 0..24u64 {
        let n = 4 + (seed as usize % 5);
        let rate = [0.3, 0.45, 0.6][seed as usize % 3];
        let g = synth_random_graph(n, rate, 1000 + seed).unwrap();
        if g.num_edges() > 0 {
            out.push((format!("random{seed}_n{n}"), g));
        }
    }
    out
}

/// Modularity from the dense definition
/// `Q = 1/(2m) * sum_ij (A_ij - k_i k_j / 2m) [c_i == c_j]`, accumulated in
/// integers as `sum_ij (2m A_ij - k_i k_j)` and divided once.
pub fn dense_modularity(g: &Graph, assignment: &[usize]) -> f64 {
    let n = g.num_nodes();
    let two_m = 2 * g.num_edges() as i64;
    let k: Vec<i64> = (0..n).map(|i| g.degree(i) as i64).collect();
    let mut total: i64 = 0;
    for i in 0..n {
        for j in 0..n {
            if assignment[i] == assignment[j] {
                let a = i64::from(g.has_edge(i, j));
                total += two_m * a - k[i] * k[j];
            }
        }
    }
    total as f64 / (two_m * two_m) as f64
}

/// Every set partition of `0..n` as a restricted growth string.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for c in 0..=max + 1 {
            prefix.push(c);
            grow(prefix, max.max(c), n, out);
            prefix.pop();
        }
    }
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut prefix = vec![0];
    grow(&mut prefix, 0, n, &mut out);
    out
}

/// Highest modularity over all partitions, with one maximiser.
pub fn best_modularity(g: &Graph) -> (f64, Vec<usize>) {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for p in set_partitions(g.num_nodes()) {
        let q = dense_modularity(g, &p);
        if q > best.0 {
            best = (q, p);
        }
    }
    best
}

/// Two classes of random graphs that differ in edge density. Learnable, so
/// the training pipeline has something to fit.
pub fn density_bundle(n_graphs: usize, nodes: usize, seed: u64) -> DatasetBundle {
    let graphs: Vec<Graph> = (0..n_graphs)
        .map(|i| {
            let label = i % 2;
            let rate = if label == 0 { 0.2 } else { 0.6 };
            let g = synth_random_graph(nodes, rate, seed.wrapping_mul(7919) + i as u64).unwrap();
            Graph::from_edges(nodes, &g.edges(), Tensor::zeros(nodes, 1), label).unwrap()
        })
        .collect();
    let (graphs, encoding) = encode_bundle(graphs).unwrap();
    DatasetBundle {
        name: "DENSITY".into(),
        feature_dim: encoding.dim(),
        num_classes: 2,
        encoding,
        graphs,
    }
}
