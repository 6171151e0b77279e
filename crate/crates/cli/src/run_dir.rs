//! On-disk layout of a training run:
//!
//! ```text
//! <dir>/manifest.cfg
//! <dir>/results.csv
//! <dir>/timing.csv
//! <dir>/checkpoints/fold_<k>.ckpt
//! ```

use std::path::{Path, PathBuf};

use agformer::attack::TrainedRun;
use agformer::config::{self, ConfigFile};
use agformer::graph::{split_hash, DatasetBundle};
use agformer::model::checkpoint::{load_checkpoint, save_checkpoint};
use agformer::train::{run_splits, CvResult, RunConfig};
use agformer::{Error, Result};

use crate::args::write_file;

fn checkpoint_path(dir: &Path, fold: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("fold_{fold}.ckpt"))
}

pub fn save_run(dir: &Path, cfg: &RunConfig, cv: &CvResult) -> Result<()> {
    write_file(&dir.join("manifest.cfg"), &config::manifest(cfg))?;
    write_file(&dir.join("results.csv"), &cv.results_csv())?;
    write_file(&dir.join("timing.csv"), &cv.timing_csv())?;
    let ckpt_dir = dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| crate::args::io_error(&ckpt_dir, e))?;
    for (model, fold) in cv.models.iter().zip(&cv.folds) {
        let meta = vec![
            ("dataset".to_string(), cfg.dataset.clone()),
            ("fold".to_string(), fold.fold.to_string()),
            ("split_hash".to_string(), format!("{:016x}", cv.split_hash)),
        ];
        save_checkpoint(&checkpoint_path(dir, fold.fold), model, &meta)?;
    }
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<RunConfig> {
    let file = ConfigFile::load(&dir.join("manifest.cfg"))?;
    config::resolve(&[&file])
}

/// Loads every fold's checkpoint and rebuilds the matching splits.
pub fn load_run(dir: &Path, bundle: &DatasetBundle) -> Result<TrainedRun> {
    let cfg = load_manifest(dir)?;
    let splits = run_splits(bundle, &cfg)?;
    let expected = format!("{:016x}", split_hash(&splits));
    let mut models = Vec::with_capacity(splits.len());
    for s in &splits {
        let path = checkpoint_path(dir, s.fold);
        let (model, meta) = load_checkpoint(&path)?;
        let hash = meta.iter().find(|(k, _)| k == "split_hash").map(|(_, v)| v.as_str());
        if hash != Some(expected.as_str()) {
            return Err(Error::Validation(format!(
                "{} was trained on different folds than the dataset gives now",
                path.display()
            )));
        }
        if model.config().in_dim != bundle.feature_dim || model.config().num_classes != bundle.num_classes {
            return Err(Error::Validation(format!(
                "{} does not match dataset {} (features {}, classes {})",
                path.display(),
                bundle.name,
                bundle.feature_dim,
                bundle.num_classes
            )));
        }
        models.push(model);
    }
    Ok(TrainedRun { cfg, models, splits })
}
