//! Optimisation, fold training and cross-validation.

mod adam;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{split_hash, stratified_kfold, DatasetBundle, FoldSplit};
use crate::model::{prepare_all, AnchorMode, Backbone, Model, ModelConfig, PreparedGraph};
use crate::tensor::Tensor;
use crate::{par, seed};

pub use adam::{Adam, BETA1, BETA2, EPS};

/// Seed streams derived from the run seed.
const STREAM_SPLIT: u64 = 0;
const STREAM_ANCHORS: u64 = 1;
const STREAM_FOLDS: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: String,
    pub backbone: Backbone,
    pub anchor_mode: AnchorMode,
    pub num_gnn_layers: usize,
    pub hidden_dim: usize,
    pub proj_dim: usize,
    pub ffn_hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub folds: usize,
    pub seed: u64,
}

impl RunConfig {
    /// Published settings for the benchmark datasets; unknown names get the
    /// MUTAG settings.
    pub fn for_dataset(name: &str, backbone: Backbone) -> Self {
        let upper = name.to_ascii_uppercase();
        let batch_size = if matches!(upper.as_str(), "NCI1" | "NCI109") {
            256
        } else {
            128
        };
        let num_gnn_layers = if matches!(upper.as_str(), "MUTAG" | "NCI1") || !is_known(&upper) {
            4
        } else {
            5
        };
        let dropout = if upper == "COLLAB" && backbone == Backbone::Gin {
            0.2
        } else {
            0.1
        };
        RunConfig {
            dataset: name.to_string(),
            backbone,
            anchor_mode: AnchorMode::Louvain,
            num_gnn_layers,
            hidden_dim: 256,
            proj_dim: 256,
            ffn_hidden: 512,
            dropout,
            epochs: 100,
            lr: 1e-4,
            weight_decay: 1e-4,
            batch_size,
            folds: 10,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be a non-negative number", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay {} must be non-negative", self.weight_decay)));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        self.model_config(1, 1).validate()
    }

    pub fn model_config(&self, in_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            backbone: self.backbone,
            num_gnn_layers: self.num_gnn_layers,
            in_dim,
            hidden_dim: self.hidden_dim,
            proj_dim: self.proj_dim,
            ffn_hidden: self.ffn_hidden,
            dropout: self.dropout,
            num_classes,
            anchor_mode: self.anchor_mode,
            ln_eps: 1e-5,
        }
    }
}

fn is_known(upper: &str) -> bool {
    matches!(
        upper,
        "MUTAG" | "NCI1" | "NCI109" | "PROTEINS" | "DD" | "COLLAB" | "IMDB-BINARY" | "IMDB-MULTI"
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub accuracy: f64,
    /// Mean training loss of each epoch.
    pub loss_trace: Vec<f64>,
    pub steps: u64,
    pub seconds: f64,
}

/// Fraction of `ids` the model classifies correctly, in evaluation mode.
pub fn evaluate(model: &Model, graphs: &[PreparedGraph], ids: &[usize]) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty set".into()));
    }
    let hits = par::map(ids, |&i| model.predict(&graphs[i]).map(|p| p == graphs[i].label));
    let mut correct = 0usize;
    for h in hits {
        correct += h? as usize;
    }
    Ok(correct as f64 / ids.len() as f64)
}

fn check_disjoint(split: &FoldSplit, n: usize) -> Result<()> {
    let mut in_train = vec![false; n];
    for &i in &split.train {
        if i >= n {
            return Err(Error::Validation(format!("train id {i} out of range")));
        }
        in_train[i] = true;
    }
    for &i in &split.test {
        if i >= n {
            return Err(Error::Validation(format!("test id {i} out of range")));
        }
        if in_train[i] {
            return Err(Error::Invariant(format!(
                "graph {i} is in both train and test of fold {}",
                split.fold
            )));
        }
    }
    Ok(())
}

/// Trains a fresh model on the fold's train ids and scores its test ids.
///
/// Each epoch shuffles the train ids; gradients are averaged over
/// `batch_size` graphs per optimiser step.
pub fn train_fold(
    graphs: &[PreparedGraph],
    split: &FoldSplit,
    cfg: &RunConfig,
    model_cfg: &ModelConfig,
    fold_seed: u64,
) -> Result<(Model, FoldResult)> {
    if split.train.is_empty() {
        return Err(Error::Config(format!("fold {} has no training graphs", split.fold)));
    }
    check_disjoint(split, graphs.len())?;
    let start = Instant::now();
    let mut model = Model::new(model_cfg.clone(), seed::derive(fold_seed, 0))?;
    let mut adam = Adam::new(model.params(), cfg.lr, cfg.weight_decay);
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed::derive(fold_seed, 1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed::derive(fold_seed, 2));
    let mut order = split.train.clone();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<Vec<Tensor>> = None;
            for &i in batch {
                let (loss, grads) = model.loss_and_grads(&graphs[i], &mut dropout_rng, true)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "loss became {loss} at fold {} epoch {epoch} on graph {i}",
                        split.fold
                    )));
                }
                epoch_loss += loss;
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(acc) => acc.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g)),
                }
            }
            let mut grads = acc.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.scale_in_place(inv));
            adam.step(model.params_mut(), &grads)?;
        }
        let mean = epoch_loss / order.len() as f64;
        log::debug!("fold {} epoch {epoch} loss {mean:.6}", split.fold);
        loss_trace.push(mean);
    }
    let accuracy = evaluate(&model, graphs, &split.test)?;
    let result = FoldResult {
        fold: split.fold,
        accuracy,
        loss_trace,
        steps: adam.steps(),
        seconds: start.elapsed().as_secs_f64(),
    };
    log::info!("fold {} accuracy {:.4} ({:.1}s)", result.fold, result.accuracy, result.seconds);
    Ok((model, result))
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    pub models: Vec<Model>,
    pub splits: Vec<FoldSplit>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    pub split_hash: u64,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Seed the anchors of a run are drawn from.
pub fn anchor_seed(cfg: &RunConfig) -> u64 {
    seed::derive(cfg.seed, STREAM_ANCHORS)
}

/// Anchors for every graph under `cfg`.
pub fn prepare_for_run(bundle: &DatasetBundle, cfg: &RunConfig) -> Result<Vec<PreparedGraph>> {
    prepare_all(&bundle.graphs, cfg.anchor_mode, anchor_seed(cfg))
}

/// Stratified folds for `cfg`; identical for every anchor mode.
pub fn run_splits(bundle: &DatasetBundle, cfg: &RunConfig) -> Result<Vec<FoldSplit>> {
    stratified_kfold(&bundle.labels(), cfg.folds, seed::derive(cfg.seed, STREAM_SPLIT))
}

/// Seed of fold `fold`; shared by every anchor mode of a run.
pub fn fold_seed(cfg: &RunConfig, fold: usize) -> u64 {
    seed::derive(seed::derive(cfg.seed, STREAM_FOLDS), fold as u64)
}

/// k-fold cross-validation. Folds run in parallel, each with its own seed.
pub fn cross_validate(bundle: &DatasetBundle, cfg: &RunConfig) -> Result<CvResult> {
    cfg.validate()?;
    bundle.validate()?;
    let graphs = prepare_for_run(bundle, cfg)?;
    let splits = run_splits(bundle, cfg)?;
    cross_validate_prepared(&graphs, splits, cfg, bundle.feature_dim, bundle.num_classes)
}

pub fn cross_validate_prepared(
    graphs: &[PreparedGraph],
    splits: Vec<FoldSplit>,
    cfg: &RunConfig,
    in_dim: usize,
    num_classes: usize,
) -> Result<CvResult> {
    let model_cfg = cfg.model_config(in_dim, num_classes);
    let runs = par::map(&splits, |s| train_fold(graphs, s, cfg, &model_cfg, fold_seed(cfg, s.fold)));
    let mut folds = Vec::with_capacity(runs.len());
    let mut models = Vec::with_capacity(runs.len());
    for r in runs {
        let (m, f) = r?;
        models.push(m);
        folds.push(f);
    }
    let accs: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let (mean, std) = mean_std(&accs);
    Ok(CvResult {
        folds,
        models,
        split_hash: split_hash(&splits),
        splits,
        mean,
        std,
    })
}

impl CvResult {
    /// `fold,accuracy` rows followed by `mean` and `std` rows. Contains no
    /// timings, so identical runs give identical bytes.
    pub fn results_csv(&self) -> String {
        let mut s = String::from("fold,accuracy\n");
        for f in &self.folds {
            let _ = writeln!(s, "{},{:.6}", f.fold, f.accuracy);
        }
        let _ = writeln!(s, "mean,{:.6}", self.mean);
        let _ = writeln!(s, "std,{:.6}", self.std);
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("fold,seconds\n");
        for f in &self.folds {
            let _ = writeln!(s, "{},{:.3}", f.fold, f.seconds);
        }
        s
    }

    pub fn summary(&self) -> String {
        format!("{:.2}±{:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub mode: AnchorMode,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug)]
pub struct Ablation {
    pub rows: Vec<AblationRow>,
    pub split_hash: u64,
}

impl Ablation {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("mode,mean,std\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.6},{:.6}", r.mode, r.mean, r.std);
        }
        s
    }
}

/// Cross-validates random and Louvain anchors on the same folds and seeds.
pub fn ablation_anchor_selection(bundle: &DatasetBundle, cfg: &RunConfig) -> Result<Ablation> {
    let mut rows = Vec::new();
    let mut hashes = Vec::new();
    for mode in [AnchorMode::Random, AnchorMode::Louvain] {
        let cfg = RunConfig {
            anchor_mode: mode,
            ..cfg.clone()
        };
        let cv = cross_validate(bundle, &cfg)?;
        hashes.push(cv.split_hash);
        rows.push(AblationRow {
            mode,
            mean: cv.mean,
            std: cv.std,
        });
    }
    if hashes[0] != hashes[1] {
        return Err(Error::Invariant("anchor modes saw different fold splits".into()));
    }
    Ok(Ablation {
        rows,
        split_hash: hashes[0],
    })
}
