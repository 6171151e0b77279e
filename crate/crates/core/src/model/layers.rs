//! The individual stages of the network, each recorded on a [`Tape`].

use std::sync::Arc;

use rand::Rng;

use crate::anchor::AnchorAssignment;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::SparseMatrix;

use super::params::{BlockIds, Bound, GinLayerIds, LayerNormIds};

/// Stacked GCN layers `relu(A_hat H W)`; the last layer has no activation.
/// Dropout is applied between layers.
pub fn gcn_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    x: Var,
    norm_adj: &Arc<SparseMatrix>,
    weights: &[Var],
    dropout: f64,
    rng: &mut R,
    training: bool,
) -> Result<Var> {
    let mut h = x;
    for (l, &w) in weights.iter().enumerate() {
        let agg = tape.spmm(Arc::clone(norm_adj), h)?;
        h = tape.matmul(agg, w)?;
        if l + 1 < weights.len() {
            h = tape.relu(h)?;
            h = tape.dropout(h, dropout, rng, training)?;
        }
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug)]
pub struct GinLayerVars {
    pub eps: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl GinLayerVars {
    pub fn bind(ids: &GinLayerIds, b: &Bound) -> Self {
        GinLayerVars {
            eps: b[ids.eps],
            w1: b[ids.w1],
            b1: b[ids.b1],
            w2: b[ids.w2],
            b2: b[ids.b2],
        }
    }
}

/// Stacked GIN layers `MLP((1 + eps) h_i + sum_j h_j)` with a
/// linear-relu-linear MLP; relu and dropout between layers.
pub fn gin_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    x: Var,
    adj: &Arc<SparseMatrix>,
    layers: &[GinLayerVars],
    dropout: f64,
    rng: &mut R,
    training: bool,
) -> Result<Var> {
    let mut h = x;
    for (l, p) in layers.iter().enumerate() {
        let nbr = tape.spmm(Arc::clone(adj), h)?;
        let scaled = tape.scale_by(h, p.eps)?;
        let own = tape.add(h, scaled)?;
        let combined = tape.add(own, nbr)?;
        let z = tape.matmul(combined, p.w1)?;
        let z = tape.bias_add(z, p.b1)?;
        let z = tape.relu(z)?;
        let z = tape.matmul(z, p.w2)?;
        h = tape.bias_add(z, p.b2)?;
        if l + 1 < layers.len() {
            h = tape.relu(h)?;
            h = tape.dropout(h, dropout, rng, training)?;
        }
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNormVars {
    pub gamma: Var,
    pub beta: Var,
}

impl LayerNormVars {
    pub fn bind(ids: &LayerNormIds, b: &Bound) -> Self {
        LayerNormVars {
            gamma: b[ids.gamma],
            beta: b[ids.beta],
        }
    }
}

/// `LN(Z W_proj)`.
pub fn project_embed(
    tape: &mut Tape,
    z: Var,
    w_proj: Var,
    ln: LayerNormVars,
    eps: f64,
) -> Result<Var> {
    let zw = tape.matmul(z, w_proj)?;
    tape.layer_norm_rows(zw, ln.gamma, ln.beta, eps)
}

/// Mean of the node embeddings in each community: `D^-1 S H`.
pub fn anchor_features(tape: &mut Tape, s: &AnchorAssignment, h: Var) -> Result<Var> {
    let rows = tape.value(h).rows();
    if rows != s.num_nodes() {
        return Err(Error::Shape(format!(
            "assignment covers {} nodes, embeddings have {rows} rows",
            s.num_nodes()
        )));
    }
    tape.segment_mean(h, s.groups(), s.num_anchors())
}

#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub ln_attn: LayerNormVars,
    pub ffn_w1: Var,
    pub ffn_b1: Var,
    pub ffn_w2: Var,
    pub ffn_b2: Var,
    pub ln_ffn: LayerNormVars,
}

impl BlockVars {
    pub fn bind(ids: &BlockIds, b: &Bound) -> Self {
        BlockVars {
            wq: b[ids.wq],
            wk: b[ids.wk],
            wv: b[ids.wv],
            ln_attn: LayerNormVars::bind(&ids.ln_attn, b),
            ffn_w1: b[ids.ffn_w1],
            ffn_b1: b[ids.ffn_b1],
            ffn_w2: b[ids.ffn_w2],
            ffn_b2: b[ids.ffn_b2],
            ln_ffn: LayerNormVars::bind(&ids.ln_ffn, b),
        }
    }
}

/// Output of an attention block together with its (pre-dropout) attention
/// matrix.
#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    pub out: Var,
    pub weights: Var,
}

/// Single-head attention of `queries` over `context`, then
/// `LN(queries + attn)` and `LN(x + FFN(x))`.
///
/// The FFN is linear-relu-dropout-linear; dropout also hits the attention
/// weights. Scores are scaled by `1/sqrt(d')` where `d'` is the query width.
#[allow(clippy::too_many_arguments)]
pub fn attention_block<R: Rng + ?Sized>(
    tape: &mut Tape,
    queries: Var,
    context: Var,
    p: &BlockVars,
    dropout: f64,
    ln_eps: f64,
    rng: &mut R,
    training: bool,
) -> Result<AttentionOutput> {
    let dq = tape.value(queries).cols();
    let dc = tape.value(context).cols();
    if dq != dc {
        return Err(Error::Shape(format!(
            "attention: query width {dq} differs from context width {dc}"
        )));
    }
    let q = tape.matmul(queries, p.wq)?;
    // scaling the queries is equivalent to scaling the scores and avoids a
    // second copy of the score matrix
    let q = tape.scale(q, 1.0 / (dq as f64).sqrt())?;
    let k = tape.matmul(context, p.wk)?;
    let v = tape.matmul(context, p.wv)?;
    let scores = tape.matmul_nt(q, k)?;
    let weights = tape.softmax_rows(scores)?;
    let dropped = tape.dropout(weights, dropout, rng, training)?;
    let attn = tape.matmul(dropped, v)?;
    let res = tape.add(queries, attn)?;
    let bar = tape.layer_norm_rows(res, p.ln_attn.gamma, p.ln_attn.beta, ln_eps)?;

    let f = tape.matmul(bar, p.ffn_w1)?;
    let f = tape.bias_add(f, p.ffn_b1)?;
    let f = tape.relu(f)?;
    let f = tape.dropout(f, dropout, rng, training)?;
    let f = tape.matmul(f, p.ffn_w2)?;
    let f = tape.bias_add(f, p.ffn_b2)?;
    let res = tape.add(bar, f)?;
    let out = tape.layer_norm_rows(res, p.ln_ffn.gamma, p.ln_ffn.beta, ln_eps)?;
    Ok(AttentionOutput { out, weights })
}

/// Anchor-to-anchor self-attention.
#[allow(clippy::too_many_arguments)]
pub fn aasa_block<R: Rng + ?Sized>(
    tape: &mut Tape,
    anchors: Var,
    p: &BlockVars,
    dropout: f64,
    ln_eps: f64,
    rng: &mut R,
    training: bool,
) -> Result<AttentionOutput> {
    attention_block(tape, anchors, anchors, p, dropout, ln_eps, rng, training)
}

/// Anchor-to-node cross-attention: node queries, anchor keys and values,
/// residual on the node stream.
#[allow(clippy::too_many_arguments)]
pub fn anca_block<R: Rng + ?Sized>(
    tape: &mut Tape,
    nodes: Var,
    anchors: Var,
    p: &BlockVars,
    dropout: f64,
    ln_eps: f64,
    rng: &mut R,
    training: bool,
) -> Result<AttentionOutput> {
    attention_block(tape, nodes, anchors, p, dropout, ln_eps, rng, training)
}

/// Node-to-node self-attention over the whole graph.
#[allow(clippy::too_many_arguments)]
pub fn full_attention_block<R: Rng + ?Sized>(
    tape: &mut Tape,
    nodes: Var,
    p: &BlockVars,
    dropout: f64,
    ln_eps: f64,
    rng: &mut R,
    training: bool,
) -> Result<AttentionOutput> {
    attention_block(tape, nodes, nodes, p, dropout, ln_eps, rng, training)
}

/// Mean pooling over nodes followed by an affine map to class logits.
pub fn readout_classify(tape: &mut Tape, h: Var, w: Var, b: Var) -> Result<Var> {
    let pooled = tape.mean_rows(h)?;
    let logits = tape.matmul(pooled, w)?;
    tape.bias_add(logits, b)
}
