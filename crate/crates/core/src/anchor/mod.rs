//! Anchor generation: community partitions of a graph and the node-to-anchor
//! assignment used to pool node embeddings into anchor features.

mod louvain;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

pub use louvain::louvain;

/// Node-to-community map with community ids contiguous from zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    num_communities: usize,
}

impl Partition {
    /// Validates that ids cover `0..C` with no gaps.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let c = assignment.iter().copied().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; c];
        for &a in &assignment {
            seen[a] = true;
        }
        if let Some(gap) = seen.iter().position(|s| !s) {
            return Err(Error::Invariant(format!("community {gap} has no members")));
        }
        Ok(Partition {
            assignment,
            num_communities: c,
        })
    }

    /// Renumbers arbitrary labels by order of first appearance.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Partition {
            assignment,
            num_communities: map.len(),
        }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn num_communities(&self) -> usize {
        self.num_communities
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut a = vec![0; self.assignment.len()];
        for (i, &c) in self.assignment.iter().enumerate() {
            a[perm[i]] = c;
        }
        Partition {
            assignment: a,
            num_communities: self.num_communities,
        }
    }
}

/// The `C x N` assignment matrix `S` in column-compressed form: column `j`
/// holds a single 1 in row `assignment[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorAssignment {
    assignment: Arc<[usize]>,
    community_sizes: Vec<usize>,
}

impl AnchorAssignment {
    pub fn num_anchors(&self) -> usize {
        self.community_sizes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn community_sizes(&self) -> &[usize] {
        &self.community_sizes
    }

    pub fn groups(&self) -> Arc<[usize]> {
        Arc::clone(&self.assignment)
    }

    pub fn to_dense(&self) -> Tensor {
        let mut s = Tensor::zeros(self.num_anchors(), self.num_nodes());
        for (j, &c) in self.assignment.iter().enumerate() {
            s.set(c, j, 1.0);
        }
        s
    }

    /// Identity assignment: every node is its own anchor.
    pub fn identity(n: usize) -> Self {
        AnchorAssignment {
            assignment: (0..n).collect::<Vec<_>>().into(),
            community_sizes: vec![1; n],
        }
    }
}

pub fn assignment_matrix(p: &Partition) -> Result<AnchorAssignment> {
    let mut sizes = vec![0usize; p.num_communities()];
    for &c in p.assignment() {
        if c >= sizes.len() {
            return Err(Error::Invariant(format!("community id {c} out of range")));
        }
        sizes[c] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Invariant(format!("community {empty} is empty")));
    }
    Ok(AnchorAssignment {
        assignment: p.assignment().to_vec().into(),
        community_sizes: sizes,
    })
}

/// Newman modularity at resolution 1.
pub fn modularity(g: &Graph, p: &Partition) -> Result<f64> {
    let m = g.num_edges();
    if m == 0 {
        return Err(Error::Numeric("modularity undefined for a graph without edges".into()));
    }
    if p.num_nodes() != g.num_nodes() {
        return Err(Error::Shape(format!(
            "partition covers {} nodes, graph has {}",
            p.num_nodes(),
            g.num_nodes()
        )));
    }
    let c = p.num_communities();
    let a = p.assignment();
    let mut intra = vec![0usize; c];
    let mut degree = vec![0usize; c];
    for (i, j) in g.edges() {
        if a[i] == a[j] {
            intra[a[i]] += 1;
        }
    }
    for i in 0..g.num_nodes() {
        degree[a[i]] += g.degree(i);
    }
    let m = m as f64;
    Ok((0..c)
        .map(|k| intra[k] as f64 / m - (degree[k] as f64 / (2.0 * m)).powi(2))
        .sum())
}

/// Uniformly random assignment of `n` nodes to `c` non-empty groups.
///
/// Draws from the same distribution as resampling plain uniform assignments
/// until no group is empty, but in a single pass: node `i` is placed by
/// conditioning on the number of ways the remaining nodes can still cover
/// every empty group.
pub fn random_partition(n: usize, c: usize, seed: u64) -> Result<Partition> {
    if c == 0 || c > n {
        return Err(Error::Config(format!("cannot split {n} nodes into {c} non-empty groups")));
    }
    // cover[m][e]: probability that m uniform draws over c groups hit all of
    // e designated groups
    let mut cover = vec![vec![0.0f64; c + 1]; n + 1];
    cover[0][0] = 1.0;
    let cf = c as f64;
    for m in 1..=n {
        for e in 0..=c.min(m) {
            let stay = (cf - e as f64) / cf * cover[m - 1][e];
            let fill = if e > 0 {
                e as f64 / cf * cover[m - 1][e - 1]
            } else {
                0.0
            };
            cover[m][e] = stay + fill;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: Vec<usize> = (0..c).collect(); // [0..used) used, [used..c) empty
    let mut used = 0usize;
    let mut assignment = Vec::with_capacity(n);
    for i in 0..n {
        let m = n - i;
        let e = c - used;
        let p_used = (cf - e as f64) / cf * cover[m - 1][e] / cover[m][e];
        let g = if used > 0 && rng.random::<f64>() < p_used {
            groups[rng.random_range(0..used)]
        } else {
            let pick = used + rng.random_range(0..e);
            groups.swap(used, pick);
            used += 1;
            groups[used - 1]
        };
        assignment.push(g);
    }
    Partition::new(assignment)
}
