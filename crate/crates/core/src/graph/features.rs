use crate::error::Result;
use crate::tensor::Tensor;

use super::Graph;

/// How node features were derived for a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureEncoding {
    /// One-hot of a discrete node label with `num_labels` values.
    NodeLabel { num_labels: usize },
    /// One-hot of the node degree, clamped to `max_degree`.
    Degree { max_degree: usize },
}

impl FeatureEncoding {
    pub fn dim(&self) -> usize {
        match *self {
            FeatureEncoding::NodeLabel { num_labels } => num_labels,
            FeatureEncoding::Degree { max_degree } => max_degree + 1,
        }
    }

    /// Feature matrix for `g` under this encoding.
    pub fn encode(&self, g: &Graph) -> Tensor {
        match *self {
            FeatureEncoding::NodeLabel { num_labels } => match g.node_labels() {
                Some(labels) => one_hot_labels(labels, num_labels),
                None => Tensor::zeros(g.num_nodes(), num_labels),
            },
            FeatureEncoding::Degree { max_degree } => {
                let deg: Vec<usize> = (0..g.num_nodes()).map(|i| g.degree(i)).collect();
                degree_one_hot(&deg, max_degree)
            }
        }
    }
}

/// One row per node with a single 1 at the node's label.
pub fn one_hot_labels(labels: &[usize], num_labels: usize) -> Tensor {
    let mut t = Tensor::zeros(labels.len(), num_labels);
    for (i, &l) in labels.iter().enumerate() {
        t.set(i, l, 1.0);
    }
    t
}

/// One row per node, width `max_degree + 1`, degrees above the cap land in
/// the last bucket.
pub fn degree_one_hot(degrees: &[usize], max_degree: usize) -> Tensor {
    let mut t = Tensor::zeros(degrees.len(), max_degree + 1);
    for (i, &d) in degrees.iter().enumerate() {
        t.set(i, d.min(max_degree), 1.0);
    }
    t
}

/// Chooses an encoding for a set of graphs and applies it: node-label
/// one-hot when every graph carries node labels, degree one-hot otherwise.
pub fn encode_bundle(graphs: Vec<Graph>) -> Result<(Vec<Graph>, FeatureEncoding)> {
    let labelled = !graphs.is_empty() && graphs.iter().all(|g| g.node_labels().is_some());
    let encoding = if labelled {
        let num_labels = graphs
            .iter()
            .flat_map(|g| g.node_labels().unwrap_or(&[]).iter().copied())
            .max()
            .map_or(0, |m| m + 1);
        FeatureEncoding::NodeLabel { num_labels }
    } else {
        let max_degree = graphs
            .iter()
            .flat_map(|g| (0..g.num_nodes()).map(move |i| g.degree(i)))
            .max()
            .unwrap_or(0);
        FeatureEncoding::Degree { max_degree }
    };
    let graphs = graphs
        .into_iter()
        .map(|g| {
            let f = encoding.encode(&g);
            g.with_features(f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((graphs, encoding))
}
