//! Two-phase Louvain modularity maximisation.
//!
//! Phase one scans nodes in ascending id and moves each into the
//! neighbouring community with the largest modularity gain (ties go to the
//! smallest community id). Phase two collapses communities into weighted
//! super-nodes. The two phases alternate until a level makes no move.

use crate::graph::Graph;

use super::Partition;

/// Minimum modularity improvement for a node move.
const MIN_GAIN: f64 = 1e-7;

/// Weighted multigraph used at every aggregation level.
struct Level {
    /// Neighbour lists without self-loops, sorted by neighbour id.
    adj: Vec<Vec<(usize, f64)>>,
    /// Weight of edges internal to the super-node (each edge once).
    internal: Vec<f64>,
}

impl Level {
    fn from_graph(g: &Graph) -> Self {
        let adj = (0..g.num_nodes())
            .map(|i| g.neighbors(i).iter().map(|&j| (j, 1.0)).collect())
            .collect();
        Level {
            adj,
            internal: vec![0.0; g.num_nodes()],
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn strength(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self.internal[i]
    }

    /// One round of local moving. Returns the community of each node and
    /// whether any node moved.
    fn local_moving(&self, m: f64) -> (Vec<usize>, bool) {
        let n = self.len();
        let mut comm: Vec<usize> = (0..n).collect();
        let k: Vec<f64> = (0..n).map(|i| self.strength(i)).collect();
        let mut tot = k.clone();
        let mut weight_to = vec![0.0f64; n];
        let mut touched: Vec<usize> = Vec::new();
        let two_m_sq = 2.0 * m * m;
        let mut any_move = false;
        loop {
            let mut moved = false;
            for i in 0..n {
                let ci = comm[i];
                for &(j, w) in &self.adj[i] {
                    let cj = comm[j];
                    if weight_to[cj] == 0.0 {
                        touched.push(cj);
                    }
                    weight_to[cj] += w;
                }
                tot[ci] -= k[i];
                let gain = |c: usize, w_in: f64| w_in / m - tot[c] * k[i] / two_m_sq;
                let stay = gain(ci, weight_to[ci]);
                touched.sort_unstable();
                touched.dedup();
                let mut best = ci;
                let mut best_gain = stay;
                for &c in &touched {
                    if c == ci {
                        continue;
                    }
                    let g = gain(c, weight_to[c]);
                    if g - stay > MIN_GAIN && (g > best_gain || (g == best_gain && c < best)) {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += k[i];
                if best != ci {
                    comm[i] = best;
                    moved = true;
                    any_move = true;
                }
                for &c in &touched {
                    weight_to[c] = 0.0;
                }
                touched.clear();
            }
            if !moved {
                break;
            }
        }
        (comm, any_move)
    }

    /// Collapses each community (already renumbered to `0..c`) into a node.
    fn aggregate(&self, comm: &[usize], c: usize) -> Level {
        let mut internal = vec![0.0; c];
        let mut pairs: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); c];
        for i in 0..self.len() {
            let ci = comm[i];
            internal[ci] += self.internal[i];
            for &(j, w) in &self.adj[i] {
                let cj = comm[j];
                if ci == cj {
                    // each internal edge is seen from both endpoints
                    internal[ci] += w / 2.0;
                } else {
                    *pairs[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        Level {
            adj: pairs.into_iter().map(|p| p.into_iter().collect()).collect(),
            internal,
        }
    }
}

/// Louvain communities of `g`.
///
/// The procedure is fully deterministic, so `seed` does not change the
/// result; it is accepted so all anchor generators share one signature.
pub fn louvain(g: &Graph, _seed: u64) -> Partition {
    let n = g.num_nodes();
    let m = g.num_edges() as f64;
    if n == 0 {
        return Partition::from_labels(&[]);
    }
    if m == 0.0 {
        return Partition::from_labels(&(0..n).collect::<Vec<_>>());
    }
    let mut node_comm: Vec<usize> = (0..n).collect();
    let mut level = Level::from_graph(g);
    loop {
        let (comm, moved) = level.local_moving(m);
        if !moved {
            break;
        }
        let renum = Partition::from_labels(&comm);
        let c = renum.num_communities();
        for nc in node_comm.iter_mut() {
            *nc = renum.assignment()[*nc];
        }
        if c == level.len() {
            break;
        }
        level = level.aggregate(renum.assignment(), c);
    }
    Partition::from_labels(&node_comm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::modularity;
    use crate::tensor::Tensor;

    fn plain(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, edges, Tensor::zeros(n, 1), 0).unwrap()
    }

    #[test]
    fn two_disjoint_triangles() {
        let g = plain(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]);
        let p = louvain(&g, 0);
        assert_eq!(p.assignment(), &[0, 0, 0, 1, 1, 1]);
        assert!((modularity(&g, &p).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bridged_cliques() {
        let g = plain(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]);
        let p = louvain(&g, 0);
        assert_eq!(p.assignment(), &[0, 0, 0, 1, 1, 1]);
        assert!((modularity(&g, &p).unwrap() - 5.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn complete_graph_is_one_community() {
        let edges: Vec<_> = (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j))).collect();
        let g = plain(4, &edges);
        let p = louvain(&g, 0);
        assert_eq!(p.num_communities(), 1);
        assert!(modularity(&g, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn trivial_graphs() {
        assert_eq!(louvain(&plain(1, &[]), 0).num_communities(), 1);
        assert_eq!(louvain(&plain(3, &[]), 0).num_communities(), 3);
    }

    #[test]
    fn components_never_merge() {
        let g = plain(5, &[(0, 1), (2, 3), (3, 4)]);
        let p = louvain(&g, 0);
        let a = p.assignment();
        assert_ne!(a[0], a[2]);
        assert_eq!(a[0], a[1]);
    }
}
