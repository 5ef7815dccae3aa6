//! The transformer that maps a tokenized (train set, query set, ψ) batch to
//! per-query class logits in a single masked forward pass.

pub mod checkpoint;
pub mod config;
pub mod net;
pub mod tokenize;

pub use checkpoint::{ModelCheckpoint, TunedSettings};
pub use config::ModelConfig;
pub use net::{
    apply_temperature, forward, loss, mask_invalid_classes, scale_logits_by_log_temperature,
    tensor_count, ForwardPass, ModelParams,
};
pub use tokenize::{build_attention_mask, tokenize, tokenize_rows, TokenizedBatch};
