//! A small hand-differentiated classifier whose forward and backward passes
//! respect a weight mask.
//!
//! The network is an optional valid, stride-1 convolution followed by a
//! stack of fully connected layers, ReLU between layers and softmax
//! cross-entropy on the logits. There are no normalization layers.

mod checkpoint;
mod flops;
mod network;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use flops::{dense_flops_forward, flops_forward, flops_train_step};
pub use network::{Architecture, ConvSpec, ForwardOutput, GradResult, Network};
pub use params::{sgd_step, Batch, ModelParams};
