//! Hybrid CNN–BiLSTM–attention network with a handcrafted-feature branch,
//! its ablation variants, parameters and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod network;
pub mod params;

pub use checkpoint::Checkpoint;
pub use config::{ConvBlockSpec, ModelConfig, Variant};
pub use network::{apply_bn_updates, backward, forward, predict, ForwardTrace, Gradients};
pub use params::{ModelParams, ParamKind, Tensor};
