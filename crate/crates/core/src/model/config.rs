use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backbone {
    Gcn,
    Gin,
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Gcn => "gcn",
            Backbone::Gin => "gin",
        })
    }
}

impl FromStr for Backbone {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Backbone::Gcn),
            "gin" => Ok(Backbone::Gin),
            other => Err(Error::Config(format!("unknown backbone {other:?} (expected gcn|gin)"))),
        }
    }
}

/// Where the transformer stage gets its anchors from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnchorMode {
    /// Louvain communities.
    Louvain,
    /// Uniform random partition with the Louvain community count.
    Random,
    /// No anchors: node-to-node self-attention over the whole graph.
    FullBaseline,
}

impl AnchorMode {
    pub fn uses_anchors(self) -> bool {
        !matches!(self, AnchorMode::FullBaseline)
    }
}

impl fmt::Display for AnchorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnchorMode::Louvain => "louvain",
            AnchorMode::Random => "random",
            AnchorMode::FullBaseline => "full",
        })
    }
}

impl FromStr for AnchorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "louvain" => Ok(AnchorMode::Louvain),
            "random" => Ok(AnchorMode::Random),
            "full" | "full-baseline" | "full_baseline" => Ok(AnchorMode::FullBaseline),
            other => Err(Error::Config(format!(
                "unknown anchor mode {other:?} (expected louvain|random|full)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub num_gnn_layers: usize,
    /// Width of the input node features.
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub proj_dim: usize,
    pub ffn_hidden: usize,
    pub dropout: f64,
    pub num_classes: usize,
    pub anchor_mode: AnchorMode,
    pub ln_eps: f64,
}

impl ModelConfig {
    /// Defaults: 256 hidden units in both stages, FFN width `2 * proj_dim`,
    /// dropout 0.1, four GNN layers.
    pub fn new(in_dim: usize, num_classes: usize) -> Self {
        ModelConfig {
            backbone: Backbone::Gcn,
            num_gnn_layers: 4,
            in_dim,
            hidden_dim: 256,
            proj_dim: 256,
            ffn_hidden: 512,
            dropout: 0.1,
            num_classes,
            anchor_mode: AnchorMode::Louvain,
            ln_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("in_dim", self.in_dim),
            ("hidden_dim", self.hidden_dim),
            ("proj_dim", self.proj_dim),
            ("ffn_hidden", self.ffn_hidden),
            ("num_classes", self.num_classes),
            ("num_gnn_layers", self.num_gnn_layers),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.ln_eps.is_nan() || self.ln_eps < 0.0 {
            return Err(Error::Config("ln_eps must be non-negative".into()));
        }
        Ok(())
    }
}
