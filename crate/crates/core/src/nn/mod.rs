//! Minimal deterministic decoder-only transformer with exact gradients.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod linalg;
pub mod loss;
pub mod mask;
pub mod model;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::ModelConfig;
pub use loss::{log_softmax, mean_nll, softmax, weighted_nll, weighted_nll_with_grad};
pub use mask::AttentionMask;
pub use model::{backward, backward_from_logits, forward, forward_cached, ForwardCache};
pub use params::{init_params, Gradients, LayerParams, ModelParams};
pub use tensor::Tensor;
