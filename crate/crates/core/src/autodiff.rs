//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s in creation
//! order, which is already a topological order. [`Tape::backward`] walks the
//! records once in reverse and accumulates gradients into every input that
//! (transitively) depends on a differentiable leaf. All reductions run in a
//! fixed order, so repeated runs are bit-identical.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;
use crate::tensor::{gemm, Side, Tensor};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulNT(usize, usize),
    Add(usize, usize),
    Scale(usize, f64),
    ScaleBy(usize, usize),
    Relu(usize),
    BiasAdd(usize, usize),
    Dropout(usize, Vec<f64>),
    SoftmaxRows(usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    SpMM(Arc<SparseMatrix>, usize),
    SegmentMean {
        x: usize,
        groups: Arc<[usize]>,
        counts: Vec<usize>,
    },
    MeanRows(usize),
    Sum(usize),
    CrossEntropy {
        logits: usize,
        label: usize,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Operation record for one forward pass.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` when `v` does not
    /// influence the loss or is a constant.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get_mut(v.idx).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.push_shared(Arc::new(value), op, needs_grad)
    }

    fn push_shared(&mut self, value: Arc<Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::MissingNode(format!(
                "variable {} does not belong to this tape",
                v.idx
            )));
        }
        Ok(v.idx)
    }

    fn node(&self, v: Var) -> Result<(usize, &Node)> {
        let i = self.check(v)?;
        Ok((i, &self.nodes[i]))
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a differentiable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a differentiable leaf without copying its storage.
    pub fn leaf_shared(&mut self, value: Arc<Tensor>) -> Var {
        self.push_shared(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.check(v).expect("foreign variable")].value
    }

    fn needs(&self, idx: &[usize]) -> bool {
        idx.iter().any(|&i| self.nodes[i].needs_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let (ib, nb) = self.node(b)?;
        let out = na.value.matmul(&nb.value)?;
        let ng = self.needs(&[ia, ib]);
        Ok(self.push(out, Op::MatMul(ia, ib), ng))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let (ib, nb) = self.node(b)?;
        let out = na.value.matmul_nt(&nb.value)?;
        let ng = self.needs(&[ia, ib]);
        Ok(self.push(out, Op::MatMulNT(ia, ib), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let (ib, nb) = self.node(b)?;
        if na.value.shape() != nb.value.shape() {
            return Err(shape_pair("add", &na.value, &nb.value));
        }
        let mut out = (*na.value).clone();
        out.add_assign(&nb.value);
        let ng = self.needs(&[ia, ib]);
        Ok(self.push(out, Op::Add(ia, ib), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let out = na.value.map(|v| v * c);
        let ng = self.needs(&[ia]);
        Ok(self.push(out, Op::Scale(ia, c), ng))
    }

    /// Multiplies `a` by the `1 x 1` variable `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let (is, ns) = self.node(s)?;
        if ns.value.shape() != (1, 1) {
            return Err(Error::Shape(format!(
                "scale_by: factor must be 1x1, got {}x{}",
                ns.value.rows(),
                ns.value.cols()
            )));
        }
        let c = ns.value.data()[0];
        let out = na.value.map(|v| v * c);
        let ng = self.needs(&[ia, is]);
        Ok(self.push(out, Op::ScaleBy(ia, is), ng))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let out = na.value.map(|v| if v > 0.0 { v } else { 0.0 });
        let ng = self.needs(&[ia]);
        Ok(self.push(out, Op::Relu(ia), ng))
    }

    /// Adds the `1 x n` row `b` to every row of `a`.
    pub fn bias_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let (ib, nb) = self.node(b)?;
        if nb.value.rows() != 1 || nb.value.cols() != na.value.cols() {
            return Err(shape_pair("bias_add", &na.value, &nb.value));
        }
        let mut out = (*na.value).clone();
        let bias = nb.value.data();
        for r in 0..out.rows() {
            for (v, b) in out.row_mut(r).iter_mut().zip(bias) {
                *v += *b;
            }
        }
        let ng = self.needs(&[ia, ib]);
        Ok(self.push(out, Op::BiasAdd(ia, ib), ng))
    }

    /// Inverted dropout. Identity (no new record) when `training` is false or
    /// `rate` is zero.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
        }
        let ia = self.check(a)?;
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.nodes[ia].value.len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let x = &self.nodes[ia].value;
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::from_vec(x.rows(), x.cols(), data)?;
        let ng = self.needs(&[ia]);
        Ok(self.push(out, Op::Dropout(ia, mask), ng))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let out = softmax_rows(&na.value)?;
        let ng = self.needs(&[ia]);
        Ok(self.push(out, Op::SoftmaxRows(ia), ng))
    }

    /// Row-wise layer normalisation with population variance, followed by
    /// the affine map `gamma * xhat + beta`.
    pub fn layer_norm_rows(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (ix, nx) = self.node(x)?;
        let (ig, ng_) = self.node(gamma)?;
        let (ib, nb) = self.node(beta)?;
        let xv = &nx.value;
        let n = xv.cols();
        if n == 0 {
            return Err(Error::Shape("layer_norm_rows: zero-width rows".into()));
        }
        for (name, p) in [("gamma", &ng_.value), ("beta", &nb.value)] {
            if p.shape() != (1, n) {
                return Err(Error::Shape(format!(
                    "layer_norm_rows: {name} is {}x{}, expected 1x{n}",
                    p.rows(),
                    p.cols()
                )));
            }
        }
        let g = ng_.value.data();
        let b = nb.value.data();
        let mut out = Tensor::zeros(xv.rows(), n);
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; xv.rows()];
        for r in 0..xv.rows() {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            let xh = &mut xhat[r * n..(r + 1) * n];
            let o = out.row_mut(r);
            for j in 0..n {
                xh[j] = (row[j] - mean) * is;
                o[j] = g[j] * xh[j] + b[j];
            }
        }
        if !out.all_finite() {
            return Err(Error::Numeric("layer_norm_rows produced non-finite output".into()));
        }
        let needs = self.needs(&[ix, ig, ib]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x: ix,
                gamma: ig,
                beta: ib,
                xhat,
                inv_std,
            },
            needs,
        ))
    }

    /// Sparse-dense product `m * x`.
    pub fn spmm(&mut self, m: Arc<SparseMatrix>, x: Var) -> Result<Var> {
        let (ix, nx) = self.node(x)?;
        let out = m.mul_dense(&nx.value)?;
        let ng = self.needs(&[ix]);
        Ok(self.push(out, Op::SpMM(m, ix), ng))
    }

    /// Mean of the rows of `x` within each group; `groups[j]` is the group of
    /// row `j`. Every group in `0..num_groups` must be non-empty.
    pub fn segment_mean(&mut self, x: Var, groups: Arc<[usize]>, num_groups: usize) -> Result<Var> {
        let (ix, nx) = self.node(x)?;
        let xv = &nx.value;
        if groups.len() != xv.rows() {
            return Err(Error::Shape(format!(
                "segment_mean: {} group labels for {} rows",
                groups.len(),
                xv.rows()
            )));
        }
        let mut counts = vec![0usize; num_groups];
        for &g in groups.iter() {
            if g >= num_groups {
                return Err(Error::Invariant(format!("group {g} out of range {num_groups}")));
            }
            counts[g] += 1;
        }
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Invariant(format!("group {c} is empty")));
        }
        let d = xv.cols();
        let mut out = Tensor::zeros(num_groups, d);
        for (j, &g) in groups.iter().enumerate() {
            for (o, v) in out.row_mut(g).iter_mut().zip(xv.row(j)) {
                *o += *v;
            }
        }
        for (g, &c) in counts.iter().enumerate() {
            let inv = 1.0 / c as f64;
            for o in out.row_mut(g) {
                *o *= inv;
            }
        }
        let ng = self.needs(&[ix]);
        Ok(self.push(out, Op::SegmentMean { x: ix, groups, counts }, ng))
    }

    /// Column-wise mean, giving a `1 x d` row.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (ix, nx) = self.node(x)?;
        let xv = &nx.value;
        if xv.rows() == 0 {
            return Err(Error::Shape("mean_rows: no rows".into()));
        }
        let mut out = Tensor::zeros(1, xv.cols());
        for r in 0..xv.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(xv.row(r)) {
                *o += *v;
            }
        }
        out.scale_in_place(1.0 / xv.rows() as f64);
        let ng = self.needs(&[ix]);
        Ok(self.push(out, Op::MeanRows(ix), ng))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let (ix, nx) = self.node(x)?;
        let out = Tensor::scalar(nx.value.sum());
        let ng = self.needs(&[ix]);
        Ok(self.push(out, Op::Sum(ix), ng))
    }

    /// `-log softmax(logits)[label]` for a `1 x K` logit row.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let (il, nl) = self.node(logits)?;
        let lv = &nl.value;
        if lv.rows() != 1 {
            return Err(Error::Shape(format!(
                "cross_entropy: logits must be 1xK, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        if label >= lv.cols() {
            return Err(Error::Config(format!(
                "label {label} out of range for {} classes",
                lv.cols()
            )));
        }
        let probs = softmax_rows(lv)?.into_data();
        let (arg, max) = lv
            .data()
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
        // log-sum-exp as max + ln(1 + rest) keeps saturated losses accurate
        let rest: f64 = lv
            .data()
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != arg)
            .map(|(_, v)| (v - max).exp())
            .sum();
        let loss = (max - lv.data()[label]) + rest.ln_1p();
        let ng = self.needs(&[il]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: il,
                label,
                probs,
            },
            ng,
        ))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let li = self.check(loss)?;
        let lv = &self.nodes[li].value;
        if lv.shape() != (1, 1) {
            return Err(Error::Shape(format!(
                "backward: loss must be scalar, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=li).map(|_| None).collect();
        grads[li] = Some(Tensor::scalar(1.0));

        for i in (0..=li).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(node, &g, &mut grads);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn backprop(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |i: usize| -> &Tensor { &self.nodes[i].value };
        let wants = |i: usize| self.nodes[i].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    let acc = slot(grads, *a, val(*a));
                    gemm(Side::N(g), Side::T(val(*b)), acc, 1.0);
                }
                if wants(*b) {
                    let acc = slot(grads, *b, val(*b));
                    gemm(Side::T(val(*a)), Side::N(g), acc, 1.0);
                }
            }
            Op::MatMulNT(a, b) => {
                if wants(*a) {
                    let acc = slot(grads, *a, val(*a));
                    gemm(Side::N(g), Side::N(val(*b)), acc, 1.0);
                }
                if wants(*b) {
                    let acc = slot(grads, *b, val(*b));
                    gemm(Side::T(g), Side::N(val(*a)), acc, 1.0);
                }
            }
            Op::Add(a, b) => {
                for &i in [a, b] {
                    if wants(i) {
                        slot(grads, i, val(i)).add_assign(g);
                    }
                }
            }
            Op::Scale(a, c) => {
                if wants(*a) {
                    let acc = slot(grads, *a, val(*a));
                    for (o, v) in acc.data_mut().iter_mut().zip(g.data()) {
                        *o += c * v;
                    }
                }
            }
            Op::ScaleBy(a, s) => {
                let c = val(*s).data()[0];
                if wants(*a) {
                    let acc = slot(grads, *a, val(*a));
                    for (o, v) in acc.data_mut().iter_mut().zip(g.data()) {
                        *o += c * v;
                    }
                }
                if wants(*s) {
                    let dot: f64 = g.data().iter().zip(val(*a).data()).map(|(x, y)| x * y).sum();
                    slot(grads, *s, val(*s)).data_mut()[0] += dot;
                }
            }
            Op::Relu(a) => {
                if wants(*a) {
                    let x = val(*a);
                    let acc = slot(grads, *a, x);
                    for ((o, v), xi) in acc.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        if *xi > 0.0 {
                            *o += v;
                        }
                    }
                }
            }
            Op::BiasAdd(a, b) => {
                if wants(*a) {
                    slot(grads, *a, val(*a)).add_assign(g);
                }
                if wants(*b) {
                    let acc = slot(grads, *b, val(*b));
                    for r in 0..g.rows() {
                        for (o, v) in acc.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Dropout(a, mask) => {
                if wants(*a) {
                    let acc = slot(grads, *a, val(*a));
                    for ((o, v), m) in acc.data_mut().iter_mut().zip(g.data()).zip(mask) {
                        *o += v * m;
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                if wants(*a) {
                    let y = &node.value;
                    let acc = slot(grads, *a, val(*a));
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((o, yi), gi) in acc.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o += yi * (gi - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let n = g.cols();
                let gam = val(*gamma).data();
                if wants(*x) {
                    let acc = slot(grads, *x, val(*x));
                    let mut dy = vec![0.0; n];
                    for r in 0..g.rows() {
                        let gr = g.row(r);
                        let xh = &xhat[r * n..(r + 1) * n];
                        let mut sum_dy = 0.0;
                        let mut sum_dy_xh = 0.0;
                        for j in 0..n {
                            dy[j] = gr[j] * gam[j];
                            sum_dy += dy[j];
                            sum_dy_xh += dy[j] * xh[j];
                        }
                        let k = inv_std[r] / n as f64;
                        for (j, o) in acc.row_mut(r).iter_mut().enumerate() {
                            *o += k * (n as f64 * dy[j] - sum_dy - xh[j] * sum_dy_xh);
                        }
                    }
                }
                if wants(*gamma) {
                    let acc = slot(grads, *gamma, val(*gamma));
                    for r in 0..g.rows() {
                        let xh = &xhat[r * n..(r + 1) * n];
                        for ((o, gi), h) in acc.data_mut().iter_mut().zip(g.row(r)).zip(xh) {
                            *o += gi * h;
                        }
                    }
                }
                if wants(*beta) {
                    let acc = slot(grads, *beta, val(*beta));
                    for r in 0..g.rows() {
                        for (o, gi) in acc.data_mut().iter_mut().zip(g.row(r)) {
                            *o += gi;
                        }
                    }
                }
            }
            Op::SpMM(m, x) => {
                if wants(*x) {
                    let acc = slot(grads, *x, val(*x));
                    m.mul_dense_transposed_into(g, acc);
                }
            }
            Op::SegmentMean { x, groups, counts } => {
                if wants(*x) {
                    let acc = slot(grads, *x, val(*x));
                    for (j, &grp) in groups.iter().enumerate() {
                        let inv = 1.0 / counts[grp] as f64;
                        for (o, v) in acc.row_mut(j).iter_mut().zip(g.row(grp)) {
                            *o += v * inv;
                        }
                    }
                }
            }
            Op::MeanRows(x) => {
                if wants(*x) {
                    let acc = slot(grads, *x, val(*x));
                    let inv = 1.0 / acc.rows() as f64;
                    for r in 0..acc.rows() {
                        for (o, v) in acc.row_mut(r).iter_mut().zip(g.data()) {
                            *o += v * inv;
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if wants(*x) {
                    let s = g.data()[0];
                    for o in slot(grads, *x, val(*x)).data_mut() {
                        *o += s;
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                label,
                probs,
            } => {
                if wants(*logits) {
                    let s = g.data()[0];
                    let acc = slot(grads, *logits, val(*logits));
                    for (k, (o, p)) in acc.data_mut().iter_mut().zip(probs).enumerate() {
                        let onehot = if k == *label { 1.0 } else { 0.0 };
                        *o += s * (p - onehot);
                    }
                }
            }
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], i: usize, like: &Tensor) -> &'a mut Tensor {
    grads[i].get_or_insert_with(|| Tensor::zeros(like.rows(), like.cols()))
}

fn shape_pair(op: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape(format!(
        "{op}: incompatible shapes {}x{} and {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    ))
}

/// Non-recording row softmax.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    if x.cols() == 0 {
        return Err(Error::Shape("softmax_rows: zero-width rows".into()));
    }
    if !x.all_finite() {
        return Err(Error::Numeric("softmax_rows: non-finite input".into()));
    }
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let row = x.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let o = out.row_mut(r);
        let mut total = 0.0;
        for (oj, v) in o.iter_mut().zip(row) {
            *oj = (v - max).exp();
            total += *oj;
        }
        let inv = 1.0 / total;
        for oj in o.iter_mut() {
            *oj *= inv;
        }
    }
    Ok(out)
}
