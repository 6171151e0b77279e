use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::config::{Backbone, ModelConfig};

/// Index of a parameter in [`ModelParams`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Named learnable tensors, in registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    values: Vec<Arc<Tensor>>,
}

impl ModelParams {
    fn new() -> Self {
        ModelParams {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    fn register(&mut self, name: String, value: Tensor) -> ParamId {
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(Arc::new(value));
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    /// Mutable access; copies the storage if a tape still shares it.
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(|v| &**v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Records every parameter as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound(self.values.iter().map(|v| tape.leaf_shared(Arc::clone(v))).collect())
    }

    pub(crate) fn replace(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let cur = &self.values[id.0];
        if cur.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "parameter {} is {}x{}, replacement is {}x{}",
                self.names[id.0],
                cur.rows(),
                cur.cols(),
                value.rows(),
                value.cols()
            )));
        }
        self.values[id.0] = Arc::new(value);
        Ok(())
    }
}

/// Tape variables for every parameter, indexed by [`ParamId`].
pub struct Bound(Vec<Var>);

impl std::ops::Index<ParamId> for Bound {
    type Output = Var;
    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerNormIds {
    pub gamma: ParamId,
    pub beta: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GinLayerIds {
    pub eps: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BackboneIds {
    Gcn(Vec<ParamId>),
    Gin(Vec<GinLayerIds>),
}

/// One attention block: query/key/value projections, residual layer norm,
/// two-layer FFN and a second residual layer norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockIds {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub ln_attn: LayerNormIds,
    pub ffn_w1: ParamId,
    pub ffn_b1: ParamId,
    pub ffn_w2: ParamId,
    pub ffn_b2: ParamId,
    pub ln_ffn: LayerNormIds,
}

/// Which parameter plays which role.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub backbone: BackboneIds,
    pub proj: ParamId,
    pub proj_ln: LayerNormIds,
    /// Anchor self-attention, or the node self-attention of the full
    /// baseline.
    pub aasa: BlockIds,
    /// Anchor-to-node cross-attention; absent for the full baseline.
    pub anca: Option<BlockIds>,
    pub cls_w: ParamId,
    pub cls_b: ParamId,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Tensor::from_vec(rows, cols, data).expect("shape")
}

struct Builder<'a> {
    params: ModelParams,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn matrix(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        let t = glorot(rows, cols, self.rng);
        self.params.register(name, t)
    }

    fn zeros(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        self.params.register(name, Tensor::zeros(rows, cols))
    }

    fn layer_norm(&mut self, prefix: &str, dim: usize) -> LayerNormIds {
        LayerNormIds {
            gamma: self.params.register(format!("{prefix}.gamma"), Tensor::filled(1, dim, 1.0)),
            beta: self.zeros(format!("{prefix}.beta"), 1, dim),
        }
    }

    fn block(&mut self, prefix: &str, dim: usize, ffn: usize) -> BlockIds {
        BlockIds {
            wq: self.matrix(format!("{prefix}.wq"), dim, dim),
            wk: self.matrix(format!("{prefix}.wk"), dim, dim),
            wv: self.matrix(format!("{prefix}.wv"), dim, dim),
            ln_attn: self.layer_norm(&format!("{prefix}.ln_attn"), dim),
            ffn_w1: self.matrix(format!("{prefix}.ffn.w1"), dim, ffn),
            ffn_b1: self.zeros(format!("{prefix}.ffn.b1"), 1, ffn),
            ffn_w2: self.matrix(format!("{prefix}.ffn.w2"), ffn, dim),
            ffn_b2: self.zeros(format!("{prefix}.ffn.b2"), 1, dim),
            ln_ffn: self.layer_norm(&format!("{prefix}.ln_ffn"), dim),
        }
    }
}

/// Registers and initialises every parameter for `config`: Glorot-uniform
/// matrices, zero biases and layer-norm offsets, unit layer-norm scales,
/// GIN epsilon zero.
pub fn init_params(config: &ModelConfig, seed: u64) -> (ModelParams, Layout) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder {
        params: ModelParams::new(),
        rng: &mut rng,
    };
    let d = config.hidden_dim;
    let backbone = match config.backbone {
        Backbone::Gcn => BackboneIds::Gcn(
            (0..config.num_gnn_layers)
                .map(|l| {
                    let fan_in = if l == 0 { config.in_dim } else { d };
                    b.matrix(format!("gnn.{l}.w"), fan_in, d)
                })
                .collect(),
        ),
        Backbone::Gin => BackboneIds::Gin(
            (0..config.num_gnn_layers)
                .map(|l| {
                    let fan_in = if l == 0 { config.in_dim } else { d };
                    GinLayerIds {
                        eps: b.zeros(format!("gnn.{l}.eps"), 1, 1),
                        w1: b.matrix(format!("gnn.{l}.w1"), fan_in, d),
                        b1: b.zeros(format!("gnn.{l}.b1"), 1, d),
                        w2: b.matrix(format!("gnn.{l}.w2"), d, d),
                        b2: b.zeros(format!("gnn.{l}.b2"), 1, d),
                    }
                })
                .collect(),
        ),
    };
    let p = config.proj_dim;
    let proj = b.matrix("proj.w".into(), d, p);
    let proj_ln = b.layer_norm("proj.ln", p);
    let aasa = b.block("aasa", p, config.ffn_hidden);
    let anca = config
        .anchor_mode
        .uses_anchors()
        .then(|| b.block("anca", p, config.ffn_hidden));
    let cls_w = b.matrix("cls.w".into(), p, config.num_classes);
    let cls_b = b.zeros("cls.b".into(), 1, config.num_classes);
    let layout = Layout {
        backbone,
        proj,
        proj_ln,
        aasa,
        anca,
        cls_w,
        cls_b,
    };
    (b.params, layout)
}
