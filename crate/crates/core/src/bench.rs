//! Wall-time comparison of anchor attention against full node attention.
//!
//! Only the attention stage is timed: anchor pooling plus the two anchor
//! blocks, or one full self-attention block. Graph generation, feature
//! initialisation and parameter setup happen outside the timer.

use std::fmt::{self, Write as _};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anchor::{assignment_matrix, louvain, random_partition, AnchorAssignment};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::graph::synth_random_graph;
use crate::model::layers::{self, BlockVars};
use crate::model::{AnchorMode, Model, ModelConfig};
use crate::seed;
use crate::tensor::Tensor;

/// Largest score-matrix footprint a full-mode run may allocate.
pub const MAX_SCORE_BYTES: usize = 3 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchMode {
    Anchor,
    Full,
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMode::Anchor => "anchor",
            BenchMode::Full => "full",
        })
    }
}

/// How many anchors the anchor mode uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnchorCount {
    Fixed(usize),
    /// Whatever Louvain finds on the synthetic graph.
    Louvain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRecord {
    pub mode: BenchMode,
    pub n: usize,
    /// Number of keys each query attends to: the anchor count, or `n`.
    pub c: usize,
    pub dim: usize,
    pub reps: usize,
    pub median_seconds: f64,
    pub mad_seconds: f64,
    pub graph_hash: u64,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation from the median.
pub fn mad(xs: &[f64]) -> f64 {
    let m = median(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m).abs()).collect();
    median(&dev)
}

/// Least-squares slope of `ln t` against `ln n`.
pub fn fit_loglog_slope(series: &[(f64, f64)]) -> Result<f64> {
    if series.len() < 3 {
        return Err(Error::Config(format!("slope fit needs at least 3 points, got {}", series.len())));
    }
    if let Some(&(n, t)) = series.iter().find(|&&(n, t)| !(n > 0.0 && t > 0.0)) {
        return Err(Error::Numeric(format!("slope fit needs positive values, got ({n}, {t})")));
    }
    let pts: Vec<(f64, f64)> = series.iter().map(|&(n, t)| (n.ln(), t.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Numeric("slope fit needs at least two distinct sizes".into()));
    }
    Ok(sxy / sxx)
}

/// Attention-stage parameters of width `dim` with FFN width `2 * dim`.
struct StageParams {
    model: Model,
}

impl StageParams {
    fn new(dim: usize, seed: u64) -> Result<Self> {
        let mut cfg = ModelConfig::new(1, 2);
        cfg.hidden_dim = 1;
        cfg.proj_dim = dim;
        cfg.ffn_hidden = 2 * dim;
        cfg.num_gnn_layers = 1;
        cfg.dropout = 0.0;
        cfg.anchor_mode = AnchorMode::Louvain;
        Ok(StageParams {
            model: Model::new(cfg, seed)?,
        })
    }

    /// Runs the timed stage once and returns the output shape.
    fn run(&self, mode: BenchMode, h: &Tensor, anchors: &AnchorAssignment) -> Result<(usize, usize)> {
        let mut tape = Tape::new();
        let bound = self.model.params().bind(&mut tape);
        let layout = self.model.layout();
        let aasa = BlockVars::bind(&layout.aasa, &bound);
        let anca = BlockVars::bind(layout.anca.as_ref().expect("anchor layout"), &bound);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eps = self.model.config().ln_eps;
        let hv = tape.constant(h.clone());
        let out = match mode {
            BenchMode::Full => layers::full_attention_block(&mut tape, hv, &aasa, 0.0, eps, &mut rng, false)?.out,
            BenchMode::Anchor => {
                let p = layers::anchor_features(&mut tape, anchors, hv)?;
                let p = layers::aasa_block(&mut tape, p, &aasa, 0.0, eps, &mut rng, false)?.out;
                layers::anca_block(&mut tape, hv, p, &anca, 0.0, eps, &mut rng, false)?.out
            }
        };
        Ok(tape.value(out).shape())
    }
}

/// Inputs for one size: graph, features and anchor assignment.
struct Case {
    h: Tensor,
    anchors: AnchorAssignment,
    graph_hash: u64,
}

fn build_case(n: usize, count: AnchorCount, dim: usize, edge_rate: f64, seed: u64) -> Result<Case> {
    let g = synth_random_graph(n, edge_rate, seed)?;
    let partition = match count {
        AnchorCount::Fixed(c) => random_partition(n, c, seed::derive(seed, 1))?,
        AnchorCount::Louvain => louvain(&g, seed),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, 2));
    let data = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(Case {
        h: Tensor::from_vec(n, dim, data)?,
        anchors: assignment_matrix(&partition)?,
        graph_hash: g.structure_hash(),
    })
}

fn check_size(mode: BenchMode, n: usize) -> Result<()> {
    if mode == BenchMode::Full {
        let bytes = n.checked_mul(n).and_then(|x| x.checked_mul(3 * 8));
        if bytes.is_none_or(|b| b > MAX_SCORE_BYTES) {
            return Err(Error::Config(format!(
                "n = {n} is too large for full attention (score matrices exceed {} GiB)",
                MAX_SCORE_BYTES >> 30
            )));
        }
    }
    Ok(())
}

fn time_case(mode: BenchMode, case: &Case, params: &StageParams, reps: usize) -> Result<Vec<f64>> {
    params.run(mode, &case.h, &case.anchors)?; // warm-up
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let shape = params.run(mode, &case.h, &case.anchors)?;
        times.push(start.elapsed().as_secs_f64());
        debug_assert_eq!(shape, case.h.shape());
    }
    Ok(times)
}

fn record(mode: BenchMode, case: &Case, dim: usize, times: &[f64]) -> TimingRecord {
    TimingRecord {
        mode,
        n: case.h.rows(),
        c: match mode {
            BenchMode::Anchor => case.anchors.num_anchors(),
            BenchMode::Full => case.h.rows(),
        },
        dim,
        reps: times.len(),
        median_seconds: median(times),
        mad_seconds: mad(times),
        graph_hash: case.graph_hash,
    }
}

/// Times one mode at one size: one warm-up, then `reps` timed runs.
pub fn time_attention(
    mode: BenchMode,
    n: usize,
    count: AnchorCount,
    dim: usize,
    reps: usize,
    edge_rate: f64,
    seed: u64,
) -> Result<TimingRecord> {
    validate(n, count, reps)?;
    check_size(mode, n)?;
    let case = build_case(n, count, dim, edge_rate, seed)?;
    let params = StageParams::new(dim, seed::derive(seed, 3))?;
    let times = time_case(mode, &case, &params, reps)?;
    Ok(record(mode, &case, dim, &times))
}

fn validate(n: usize, count: AnchorCount, reps: usize) -> Result<()> {
    if reps < 3 {
        return Err(Error::Config(format!("need at least 3 reps, got {reps}")));
    }
    if let AnchorCount::Fixed(c) = count {
        if c == 0 || c > n {
            return Err(Error::Config(format!("anchor count {c} must be in 1..={n}")));
        }
    }
    Ok(())
}

/// Both modes at every size. Size `n` uses seed stream `n`, so a size's
/// graph does not depend on which other sizes are swept.
pub fn scaling_sweep(
    sizes: &[usize],
    count: AnchorCount,
    dim: usize,
    reps: usize,
    edge_rate: f64,
    seed: u64,
) -> Result<Vec<TimingRecord>> {
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("sizes must be strictly ascending".into()));
    }
    let mut out = Vec::with_capacity(2 * sizes.len());
    for &n in sizes {
        validate(n, count, reps)?;
        check_size(BenchMode::Full, n)?;
    }
    for &n in sizes {
        let s = seed::derive(seed, n as u64);
        let case = build_case(n, count, dim, edge_rate, s)?;
        let params = StageParams::new(dim, seed::derive(s, 3))?;
        for mode in [BenchMode::Anchor, BenchMode::Full] {
            let times = time_case(mode, &case, &params, reps)?;
            let r = record(mode, &case, dim, &times);
            log::info!(
                "{} n={} c={} median {:.3} ms (graph {:016x})",
                r.mode,
                r.n,
                r.c,
                1e3 * r.median_seconds,
                r.graph_hash
            );
            out.push(r);
        }
    }
    Ok(out)
}

pub fn timings_csv(records: &[TimingRecord]) -> String {
    let mut s = String::from("mode,n,c,median_ms,mad_ms\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{:.4},{:.4}",
            r.mode,
            r.n,
            r.c,
            1e3 * r.median_seconds,
            1e3 * r.mad_seconds
        );
    }
    s
}

/// Log-log slope of one mode's median times.
pub fn mode_slope(records: &[TimingRecord], mode: BenchMode) -> Result<f64> {
    let series: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.mode == mode)
        .map(|r| (r.n as f64, r.median_seconds))
        .collect();
    fit_loglog_slope(&series)
}
