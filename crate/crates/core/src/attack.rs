//! Robustness of trained models to random edge insertions.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{perturb_bundle, DatasetBundle, FoldSplit};
use crate::model::{prepare_all, AnchorMode, Model};
use crate::seed;
use crate::train::{anchor_seed, evaluate, RunConfig};

pub const DEFAULT_RATES: [f64; 5] = [0.0, 0.05, 0.10, 0.15, 0.20];

/// Per-fold models of one cross-validation run.
#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub cfg: RunConfig,
    pub models: Vec<Model>,
    pub splits: Vec<FoldSplit>,
}

impl TrainedRun {
    pub fn label(&self) -> &'static str {
        if self.cfg.anchor_mode.uses_anchors() {
            "anchor"
        } else {
            "full"
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessRow {
    pub rate: f64,
    pub mode: &'static str,
    /// Mean test accuracy over folds.
    pub accuracy: f64,
}

/// Mean fold accuracy of `run` on `bundle`, with anchors recomputed on the
/// given graphs exactly as training did.
pub fn run_accuracy(run: &TrainedRun, bundle: &DatasetBundle) -> Result<f64> {
    if run.models.len() != run.splits.len() {
        return Err(Error::Validation(format!(
            "{} models for {} folds",
            run.models.len(),
            run.splits.len()
        )));
    }
    let graphs = prepare_all(&bundle.graphs, run.cfg.anchor_mode, anchor_seed(&run.cfg))?;
    let mut total = 0.0;
    for (model, split) in run.models.iter().zip(&run.splits) {
        total += evaluate(model, &graphs, &split.test)?;
    }
    Ok(total / run.models.len() as f64)
}

/// Accuracy of every run at every flip rate. All graphs are perturbed (each
/// is a test graph of exactly one fold); a rate uses the same perturbed
/// graphs for every run.
pub fn robustness_curve(
    bundle: &DatasetBundle,
    runs: &[TrainedRun],
    rates: &[f64],
    seed: u64,
) -> Result<Vec<RobustnessRow>> {
    let all: Vec<usize> = (0..bundle.graphs.len()).collect();
    let mut rows = Vec::with_capacity(rates.len() * runs.len());
    for &rate in rates {
        let stream = (rate * 1e6).round() as u64;
        let perturbed = perturb_bundle(bundle, &all, rate, seed::derive(seed, stream))?;
        for run in runs {
            let accuracy = run_accuracy(run, &perturbed)?;
            log::info!("rate {rate:.2} {} accuracy {accuracy:.4}", run.label());
            rows.push(RobustnessRow {
                rate,
                mode: run.label(),
                accuracy,
            });
        }
    }
    Ok(rows)
}

/// Accuracy drop from rate 0 to `rate` for `mode`.
pub fn accuracy_drop(rows: &[RobustnessRow], mode: &str, rate: f64) -> Option<f64> {
    let at = |r: f64| {
        rows.iter()
            .find(|x| x.mode == mode && (x.rate - r).abs() < 1e-12)
            .map(|x| x.accuracy)
    };
    Some(at(0.0)? - at(rate)?)
}

pub fn robustness_csv(rows: &[RobustnessRow]) -> String {
    let mut s = String::from("rate,mode,accuracy\n");
    for r in rows {
        let _ = writeln!(s, "{:.2},{},{:.6}", r.rate, r.mode, r.accuracy);
    }
    s
}

/// The anchor-mode and full-baseline variants of `cfg`.
pub fn attack_modes(cfg: &RunConfig) -> [RunConfig; 2] {
    let anchor = if cfg.anchor_mode.uses_anchors() {
        cfg.anchor_mode
    } else {
        AnchorMode::Louvain
    };
    [
        RunConfig {
            anchor_mode: anchor,
            ..cfg.clone()
        },
        RunConfig {
            anchor_mode: AnchorMode::FullBaseline,
            ..cfg.clone()
        },
    ]
}
