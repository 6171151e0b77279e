//! The anchor graph transformer: GNN backbone, projection, anchor pooling,
//! anchor self-attention, anchor-to-node cross-attention and readout.

pub mod checkpoint;
mod config;
pub mod layers;
mod params;


use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anchor::{assignment_matrix, louvain, random_partition, AnchorAssignment, Partition};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{adjacency, normalized_adjacency, Graph, SparseMatrix};
use crate::tensor::Tensor;
use crate::{par, seed};

pub use config::{AnchorMode, Backbone, ModelConfig};
pub use params::{
    init_params, BackboneIds, BlockIds, Bound, GinLayerIds, LayerNormIds, Layout, ModelParams,
    ParamId,
};

use layers::{BlockVars, GinLayerVars, LayerNormVars};

/// A graph with everything the forward pass needs precomputed.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub features: Arc<Tensor>,
    pub norm_adj: Arc<SparseMatrix>,
    pub adj: Arc<SparseMatrix>,
    pub anchors: Option<AnchorAssignment>,
    pub label: usize,
}

impl PreparedGraph {
    /// Uses the given partition as the anchor assignment, or none.
    pub fn with_partition(g: &Graph, partition: Option<&Partition>) -> Result<Self> {
        let anchors = partition
            .map(|p| {
                if p.num_nodes() != g.num_nodes() {
                    return Err(Error::Shape(format!(
                        "partition covers {} nodes, graph has {}",
                        p.num_nodes(),
                        g.num_nodes()
                    )));
                }
                assignment_matrix(p)
            })
            .transpose()?;
        Ok(PreparedGraph {
            features: Arc::new(g.features().clone()),
            norm_adj: Arc::new(normalized_adjacency(g)),
            adj: Arc::new(adjacency(g)),
            anchors,
            label: g.label(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }
}

/// Anchor partition of `g` for `mode`, or `None` for the full baseline.
pub fn anchor_partition(g: &Graph, mode: AnchorMode, seed: u64) -> Result<Option<Partition>> {
    match mode {
        AnchorMode::FullBaseline => Ok(None),
        AnchorMode::Louvain => Ok(Some(louvain(g, seed))),
        AnchorMode::Random => {
            let c = louvain(g, seed).num_communities();
            random_partition(g.num_nodes(), c, seed).map(Some)
        }
    }
}

pub fn prepare_graph(g: &Graph, mode: AnchorMode, seed: u64) -> Result<PreparedGraph> {
    let p = anchor_partition(g, mode, seed)?;
    PreparedGraph::with_partition(g, p.as_ref())
}

/// Prepares every graph; graph `i` draws its anchors from stream `i` of
/// `seed`.
pub fn prepare_all(graphs: &[Graph], mode: AnchorMode, seed: u64) -> Result<Vec<PreparedGraph>> {
    par::map_range(graphs.len(), |i| {
        prepare_graph(&graphs[i], mode, seed::derive(seed, i as u64))
    })
    .into_iter()
    .collect()
}

/// Variables produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// `1 x K` class logits.
    pub logits: Var,
    /// Attention matrices in block order, before dropout.
    pub attention: Vec<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams,
    layout: Layout,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (params, layout) = init_params(&config, seed);
        Ok(Model {
            config,
            params,
            layout,
        })
    }

    /// Rebuilds a model from stored parameter values, checking that every
    /// expected parameter is present with the right shape.
    pub fn from_named(config: ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        let mut model = Model::new(config, 0)?;
        if named.len() != model.params.len() {
            return Err(Error::Validation(format!(
                "expected {} parameters, found {}",
                model.params.len(),
                named.len()
            )));
        }
        for (name, value) in named {
            let id = model
                .params
                .find(&name)
                .ok_or_else(|| Error::Validation(format!("unexpected parameter {name}")))?;
            model.params.replace(id, value)?;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Records the forward pass of `g` on `tape` using the bound parameters.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        g: &PreparedGraph,
        rng: &mut R,
        training: bool,
    ) -> Result<Forward> {
        let cfg = &self.config;
        let drop = cfg.dropout;
        let x = tape.constant((*g.features).clone());
        let z = match &self.layout.backbone {
            BackboneIds::Gcn(ws) => {
                let ws: Vec<Var> = ws.iter().map(|&id| bound[id]).collect();
                layers::gcn_forward(tape, x, &g.norm_adj, &ws, drop, rng, training)?
            }
            BackboneIds::Gin(ls) => {
                let ls: Vec<GinLayerVars> = ls.iter().map(|l| GinLayerVars::bind(l, bound)).collect();
                layers::gin_forward(tape, x, &g.adj, &ls, drop, rng, training)?
            }
        };
        let ln = LayerNormVars::bind(&self.layout.proj_ln, bound);
        let h = layers::project_embed(tape, z, bound[self.layout.proj], ln, cfg.ln_eps)?;
        let aasa = BlockVars::bind(&self.layout.aasa, bound);
        let mut attention = Vec::with_capacity(2);
        let out = match (&self.layout.anca, &g.anchors) {
            (None, _) => {
                let full = layers::full_attention_block(tape, h, &aasa, drop, cfg.ln_eps, rng, training)?;
                attention.push(full.weights);
                full.out
            }
            (Some(anca), Some(s)) => {
                let p = layers::anchor_features(tape, s, h)?;
                let mixed = layers::aasa_block(tape, p, &aasa, drop, cfg.ln_eps, rng, training)?;
                attention.push(mixed.weights);
                let anca = BlockVars::bind(anca, bound);
                let cross =
                    layers::anca_block(tape, h, mixed.out, &anca, drop, cfg.ln_eps, rng, training)?;
                attention.push(cross.weights);
                cross.out
            }
            (Some(_), None) => {
                return Err(Error::Config(format!(
                    "anchor mode {} needs an anchor assignment",
                    cfg.anchor_mode
                )))
            }
        };
        let logits =
            layers::readout_classify(tape, out, bound[self.layout.cls_w], bound[self.layout.cls_b])?;
        Ok(Forward { logits, attention })
    }

    /// Evaluation-mode logits.
    pub fn logits(&self, g: &PreparedGraph) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        // dropout is inactive in evaluation, the generator is never drawn from
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = self.forward(&mut tape, &bound, g, &mut rng, false)?;
        Ok(tape.value(f.logits).clone())
    }

    pub fn predict(&self, g: &PreparedGraph) -> Result<usize> {
        let logits = self.logits(g)?;
        Ok(argmax(logits.row(0)))
    }

    /// Cross-entropy of `g` and its gradient for every parameter, in
    /// parameter order.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        g: &PreparedGraph,
        rng: &mut R,
        training: bool,
    ) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let f = self.forward(&mut tape, &bound, g, rng, training)?;
        let loss = tape.cross_entropy(f.logits, g.label)?;
        let value = tape.value(loss).get(0, 0);
        let mut grads = tape.backward(loss)?;
        let grads = self
            .params
            .ids()
            .map(|id| {
                grads
                    .take(bound[id])
                    .unwrap_or_else(|| Tensor::zeros(self.params.get(id).rows(), self.params.get(id).cols()))
            })
            .collect();
        Ok((value, grads))
    }
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
