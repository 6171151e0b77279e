use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{degree_one_hot, DatasetBundle, FeatureEncoding, Graph};

/// Non-edge enumeration is used up to this many candidate pairs; rejection
/// sampling above it.
const ENUMERATE_LIMIT: usize = 1 << 22;

/// Erdős–Rényi graph: every unordered pair is an edge with probability
/// `edge_rate`. Features are degree one-hot.
pub fn synth_random_graph(n: usize, edge_rate: f64, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Config(format!("synthetic graph needs n >= 2, got {n}")));
    }
    if !(edge_rate > 0.0 && edge_rate <= 1.0) {
        return Err(Error::Config(format!("edge rate {edge_rate} not in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if edge_rate >= 1.0 || rng.random::<f64>() < edge_rate {
                edges.push((i, j));
            }
        }
    }
    let g = Graph::from_edges(n, &edges, Tensor::zeros(n, 0), 0)?;
    let deg: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
    let max_degree = deg.iter().copied().max().unwrap_or(0);
    g.with_features(degree_one_hot(&deg, max_degree))
}

/// Adds `ceil(rate * |E|)` distinct non-edges chosen uniformly at random,
/// keeping every original edge. Clamps to the number of available non-edges.
pub fn flip_edges(g: &Graph, rate: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("flip rate {rate} not in [0, 1]")));
    }
    let n = g.num_nodes();
    let m = g.num_edges();
    // tolerance keeps products like 0.15 * 20 from rounding up to 4
    let requested = (rate * m as f64 - 1e-9).ceil().max(0.0) as usize;
    let total_pairs = n * n.saturating_sub(1) / 2;
    let available = total_pairs - m;
    let k = if requested > available {
        log::warn!(
            "flip_edges: requested {requested} new edges but only {available} non-edges exist; adding all"
        );
        available
    } else {
        requested
    };
    if k == 0 {
        return Ok(g.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut added = Vec::with_capacity(k);
    if available <= ENUMERATE_LIMIT {
        let mut candidates = Vec::with_capacity(available);
        for i in 0..n {
            for j in i + 1..n {
                if !g.has_edge(i, j) {
                    candidates.push((i, j));
                }
            }
        }
        for idx in sample(&mut rng, candidates.len(), k).into_vec() {
            added.push(candidates[idx]);
        }
    } else {
        let mut seen = HashSet::with_capacity(k);
        while added.len() < k {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if a != b && !g.has_edge(a, b) && seen.insert((a, b)) {
                added.push((a, b));
            }
        }
    }
    let mut edges = g.edges();
    edges.extend(added);
    let mut out = Graph::from_edges(n, &edges, g.features().clone(), g.label())?;
    if let Some(l) = g.node_labels() {
        out = out.with_node_labels(l.to_vec())?;
    }
    Ok(out)
}

/// Applies [`flip_edges`] to the graphs at `ids`, re-deriving degree
/// features where the dataset uses them. Graph `i` draws from a stream
/// derived from `(seed, i)`.
pub fn perturb_bundle(
    bundle: &DatasetBundle,
    ids: &[usize],
    rate: f64,
    seed: u64,
) -> Result<DatasetBundle> {
    let mut out = bundle.clone();
    for &i in ids {
        let g = &bundle.graphs[i];
        let mut p = flip_edges(g, rate, crate::seed::derive(seed, i as u64))?;
        if let FeatureEncoding::Degree { .. } = bundle.encoding {
            let f = bundle.encoding.encode(&p);
            p = p.with_features(f)?;
        }
        out.graphs[i] = p;
    }
    Ok(out)
}
