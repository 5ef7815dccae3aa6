//! Minimal dense f32 compute core: tensors, a reverse-mode tape, and Adam.

pub mod adam;
pub mod graph;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Gradients, NodeId, Tape};
pub use tensor::{log_softmax_rows, matmul, softmax_rows, transpose, Tensor};
