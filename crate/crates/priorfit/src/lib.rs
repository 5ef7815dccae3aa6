//! priorfit: a desk-scale prior-fitted network for tabular classification.
//!
//! The pipeline: sample synthetic classification datasets from a structural
//! causal / Bayesian-network / Gaussian-process mixture prior, meta-train a
//! transformer to predict held-out labels of such datasets in a single
//! forward pass, tune the prior's hyperparameter vector (and a softmax
//! temperature) by gradient descent through the frozen network, and serve
//! predictions on real tabular tasks with a permutation ensemble.

pub mod error;
pub mod eval;
pub mod infer;
pub mod model;
pub mod numerics;
pub mod prior;
pub mod train;
pub mod tune;

pub use error::{Error, Result};
