//! Anchor graph transformer engine.
//!
//! Graphs are embedded with a GCN or GIN backbone, pooled into community
//! anchors found by Louvain, mixed with anchor-to-anchor self-attention and
//! anchor-to-node cross-attention, then read out for graph classification.
//! Everything runs on a small define-by-run autodiff tape over dense `f64`
//! matrices.

pub mod anchor;
pub mod attack;
pub mod autodiff;
pub mod bench;
pub mod config;
pub mod error;
pub mod graph;
pub mod model;
pub mod par;
pub mod seed;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
