//! Undirected graphs in canonical compressed form, plus the sparse operators
//! the backbones consume.

mod features;
mod perturb;
mod split;
mod tu;

use std::hash::{DefaultHasher, Hash, Hasher};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use features::{degree_one_hot, encode_bundle, one_hot_labels, FeatureEncoding};
pub use perturb::{flip_edges, perturb_bundle, synth_random_graph};
pub use split::{split_hash, stratified_kfold, FoldSplit};
pub use tu::{load_tu_dataset, write_tu_dataset};

/// Undirected simple graph with node features and a class label.
///
/// Neighbour lists are sorted, symmetric, and free of self-loops and
/// duplicates.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    features: Tensor,
    label: usize,
    node_labels: Option<Vec<usize>>,
}

impl Graph {
    /// Builds a canonical graph from an arbitrary edge list. Edges may be
    /// given in one or both directions; self-loops and repeats are dropped.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Tensor,
        label: usize,
    ) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::Validation(format!(
                    "edge ({a}, {b}) out of range for {num_nodes} nodes"
                )));
            }
            if a != b {
                lists[a].push(b);
                lists[b].push(a);
            }
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut l in lists {
            l.sort_unstable();
            l.dedup();
            neighbors.extend(l);
            offsets.push(neighbors.len());
        }
        Ok(Graph {
            offsets,
            neighbors,
            features,
            label,
            node_labels: None,
        })
    }

    pub fn with_node_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.num_nodes() {
            return Err(Error::Shape(format!(
                "{} node labels for {} nodes",
                labels.len(),
                self.num_nodes()
            )));
        }
        self.node_labels = Some(labels);
        Ok(self)
    }

    pub fn with_features(mut self, features: Tensor) -> Result<Self> {
        if features.rows() != self.num_nodes() {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                self.num_nodes()
            )));
        }
        self.features = features;
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Each undirected edge once, as `(low, high)`, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for i in 0..self.num_nodes() {
            for &j in self.neighbors(i) {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn node_labels(&self) -> Option<&[usize]> {
        self.node_labels.as_deref()
    }

    /// Rebuilds the graph from its own edge list; a no-op for canonical
    /// graphs.
    pub fn canonical(&self) -> Result<Self> {
        let mut g = Graph::from_edges(
            self.num_nodes(),
            &self.edges(),
            self.features.clone(),
            self.label,
        )?;
        g.node_labels = self.node_labels.clone();
        Ok(g)
    }

    /// Relabels node `i` as `perm[i]`, carrying features and node labels.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(Error::Shape("permutation length mismatch".into()));
        }
        let mut hit = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut hit[p], true) {
                return Err(Error::Validation(format!("{perm:?} is not a permutation of 0..{n}")));
            }
        }
        let edges: Vec<_> = self.edges().iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let mut feats = Tensor::zeros(n, self.features.cols());
        for (i, &p) in perm.iter().enumerate() {
            feats.row_mut(p).copy_from_slice(self.features.row(i));
        }
        let mut g = Graph::from_edges(n, &edges, feats, self.label)?;
        if let Some(l) = &self.node_labels {
            let mut nl = vec![0; n];
            for i in 0..n {
                nl[perm[i]] = l[i];
            }
            g.node_labels = Some(nl);
        }
        Ok(g)
    }

    /// Structural fingerprint (node count and edge list).
    pub fn structure_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.num_nodes().hash(&mut h);
        self.neighbors.hash(&mut h);
        self.offsets.hash(&mut h);
        h.finish()
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `r` as `(column, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                t.set(r, c, t.get(r, c) + v);
            }
        }
        t
    }

    pub fn mul_dense(&self, x: &Tensor) -> Result<Tensor> {
        if x.rows() != self.cols {
            return Err(Error::Shape(format!(
                "spmm: incompatible shapes {}x{} and {}x{}",
                self.rows,
                self.cols,
                x.rows(),
                x.cols()
            )));
        }
        let mut out = Tensor::zeros(self.rows, x.cols());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let src = x.row(c);
                for (o, s) in out.row_mut(r).iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        Ok(out)
    }

    /// `acc += self^T * g`.
    pub fn mul_dense_transposed_into(&self, g: &Tensor, acc: &mut Tensor) {
        debug_assert_eq!(g.rows(), self.rows);
        debug_assert_eq!(acc.rows(), self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let src = g.row(r);
                for (o, s) in acc.row_mut(c).iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
    }
}

/// `D^-1/2 (A + I) D^-1/2` where `D` is the degree matrix of `A + I`.
pub fn normalized_adjacency(g: &Graph) -> SparseMatrix {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / ((g.degree(i) + 1) as f64).sqrt()).collect();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(g.neighbors.len() + n);
    let mut values = Vec::with_capacity(g.neighbors.len() + n);
    indptr.push(0);
    for i in 0..n {
        let mut self_done = false;
        for &j in g.neighbors(i) {
            if !self_done && j > i {
                indices.push(i);
                values.push(inv_sqrt[i] * inv_sqrt[i]);
                self_done = true;
            }
            indices.push(j);
            values.push(inv_sqrt[i] * inv_sqrt[j]);
        }
        if !self_done {
            indices.push(i);
            values.push(inv_sqrt[i] * inv_sqrt[i]);
        }
        indptr.push(indices.len());
    }
    SparseMatrix {
        rows: n,
        cols: n,
        indptr,
        indices,
        values,
    }
}

/// The 0/1 adjacency matrix without self-loops.
pub fn adjacency(g: &Graph) -> SparseMatrix {
    SparseMatrix {
        rows: g.num_nodes(),
        cols: g.num_nodes(),
        indptr: g.offsets.clone(),
        indices: g.neighbors.clone(),
        values: vec![1.0; g.neighbors.len()],
    }
}

/// A collection of graphs sharing one feature space.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub encoding: FeatureEncoding,
}

impl DatasetBundle {
    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(Graph::label).collect()
    }

    /// Checks the shared-feature-space and label-range invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.graphs.iter().enumerate() {
            if g.features().cols() != self.feature_dim {
                return Err(Error::Validation(format!(
                    "graph {i} has feature width {} but the dataset uses {}",
                    g.features().cols(),
                    self.feature_dim
                )));
            }
            if g.label() >= self.num_classes {
                return Err(Error::Validation(format!(
                    "graph {i} label {} outside [0, {})",
                    g.label(),
                    self.num_classes
                )));
            }
        }
        Ok(())
    }

    pub fn mean_nodes(&self) -> f64 {
        let total: usize = self.graphs.iter().map(Graph::num_nodes).sum();
        total as f64 / self.graphs.len().max(1) as f64
    }

    pub fn max_nodes(&self) -> usize {
        self.graphs.iter().map(Graph::num_nodes).max().unwrap_or(0)
    }

    pub fn mean_edges(&self) -> f64 {
        let total: usize = self.graphs.iter().map(Graph::num_edges).sum();
        total as f64 / self.graphs.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn plain(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, edges, Tensor::zeros(n, 1), 0).unwrap()
    }

    #[test]
    fn canonical_form_is_symmetric_sorted_and_idempotent() {
        let g = plain(4, &[(2, 0), (0, 2), (1, 1), (3, 1), (0, 1), (1, 0)]);
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.neighbors(1), &[0, 3]);
        assert_eq!(g.num_edges(), 3);
        for i in 0..4 {
            for &j in g.neighbors(i) {
                assert!(g.has_edge(j, i));
                assert_ne!(i, j);
            }
        }
        assert_eq!(g.canonical().unwrap(), g);
    }

    #[test]
    fn feature_rows_must_match() {
        assert!(Graph::from_edges(3, &[], Tensor::zeros(2, 1), 0).is_err());
    }

    #[test]
    fn normalized_adjacency_examples() {
        let single = normalized_adjacency(&plain(1, &[]));
        assert_eq!(single.to_dense().data(), &[1.0]);

        let pair = normalized_adjacency(&plain(2, &[(0, 1)])).to_dense();
        assert!(pair.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));

        let tri = normalized_adjacency(&plain(3, &[(0, 1), (1, 2), (0, 2)])).to_dense();
        assert!(tri.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn regular_graph_rows_sum_to_one() {
        for n in 3..9 {
            let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            let a = normalized_adjacency(&plain(n, &edges)).to_dense();
            for r in 0..n {
                let s: f64 = a.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_adjacency_row_sums_follow_degrees() {
        let g = plain(5, &[(0, 1), (0, 2), (0, 3), (3, 4)]);
        let a = normalized_adjacency(&g).to_dense();
        for i in 0..5 {
            let di = (g.degree(i) + 1) as f64;
            let mut expect = 1.0 / di;
            for &j in g.neighbors(i) {
                expect += 1.0 / (di * (g.degree(j) + 1) as f64).sqrt();
            }
            let s: f64 = a.row(i).iter().sum();
            assert!((s - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn spmm_transposed_matches_dense() {
        let g = plain(4, &[(0, 1), (1, 2), (2, 3)]);
        let a = normalized_adjacency(&g);
        let x = Tensor::from_vec(4, 2, (0..8).map(f64::from).collect()).unwrap();
        let dense = a.to_dense().transpose().matmul(&x).unwrap();
        let mut acc = Tensor::zeros(4, 2);
        a.mul_dense_transposed_into(&x, &mut acc);
        for (p, q) in acc.data().iter().zip(dense.data()) {
            assert!((p - q).abs() < 1e-14);
        }
    }
}
