use std::path::{Path, PathBuf};

use agformer::config::{self, ConfigFile};
use agformer::graph::{load_tu_dataset, DatasetBundle};
use agformer::model::{AnchorMode, Backbone};
use agformer::train::RunConfig;
use agformer::{Error, Result};
use clap::Args;

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset name, e.g. MUTAG. Files are looked up as
    /// <data-dir>/<NAME>/<NAME>_A.txt or <data-dir>/<NAME>_A.txt.
    #[arg(long)]
    pub dataset: Option<String>,

    /// Root directory holding TU-format datasets.
    #[arg(long, env = "AGF_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
}

/// Run settings; every flag overrides the config file.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Config file with [data], [model] and [train] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// GNN backbone: gcn or gin.
    #[arg(long)]
    pub backbone: Option<Backbone>,

    /// Anchor source: louvain, random or full (no anchors).
    #[arg(long)]
    pub anchor_mode: Option<AnchorMode>,

    /// Number of GNN layers.
    #[arg(long)]
    pub layers: Option<usize>,

    /// GNN hidden width.
    #[arg(long)]
    pub hidden_dim: Option<usize>,

    /// Attention width.
    #[arg(long)]
    pub proj_dim: Option<usize>,

    /// Hidden width of the attention feed-forward layers.
    #[arg(long)]
    pub ffn_hidden: Option<usize>,

    #[arg(long)]
    pub dropout: Option<f64>,

    #[arg(long)]
    pub epochs: Option<usize>,

    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,

    /// L2 weight decay added to the gradients.
    #[arg(long)]
    pub weight_decay: Option<f64>,

    /// Graphs per optimiser step.
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Number of cross-validation folds (at least 2).
    #[arg(long)]
    pub folds: Option<usize>,

    /// Master seed [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,

    /// Threads for fold-level parallelism; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

impl RunArgs {
    fn flag_layer(&self) -> ConfigFile {
        let mut c = ConfigFile::default();
        let mut put = |s: &str, k: &str, v: Option<String>| {
            if let Some(v) = v {
                c.set(s, k, &v);
            }
        };
        put("data", "dataset", self.data.dataset.clone());
        put("model", "backbone", self.backbone.map(|b| b.to_string()));
        put("model", "anchor_mode", self.anchor_mode.map(|m| m.to_string()));
        put("model", "layers", self.layers.map(|v| v.to_string()));
        put("model", "hidden_dim", self.hidden_dim.map(|v| v.to_string()));
        put("model", "proj_dim", self.proj_dim.map(|v| v.to_string()));
        put("model", "ffn_hidden", self.ffn_hidden.map(|v| v.to_string()));
        put("model", "dropout", self.dropout.map(|v| format!("{v:?}")));
        put("train", "epochs", self.epochs.map(|v| v.to_string()));
        put("train", "lr", self.lr.map(|v| format!("{v:?}")));
        put("train", "weight_decay", self.weight_decay.map(|v| format!("{v:?}")));
        put("train", "batch_size", self.batch_size.map(|v| v.to_string()));
        put("train", "folds", self.folds.map(|v| v.to_string()));
        put("train", "seed", self.seed.map(|v| v.to_string()));
        c
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        config::resolve(&[&file, &self.flag_layer()])
    }
}

pub fn load_dataset(data_dir: &Path, name: &str) -> Result<DatasetBundle> {
    let nested = data_dir.join(name);
    let dir = if nested.is_dir() { nested } else { data_dir.to_path_buf() };
    let bundle = load_tu_dataset(&dir, name)?;
    log::info!(
        "{}: {} graphs, {} classes, {} features, {:.2} nodes and {:.2} edges on average",
        bundle.name,
        bundle.graphs.len(),
        bundle.num_classes,
        bundle.feature_dim,
        bundle.mean_nodes(),
        bundle.mean_edges()
    );
    Ok(bundle)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses `a,b,c` into a list.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| format!("invalid list item {x:?}")))
        .collect()
}
