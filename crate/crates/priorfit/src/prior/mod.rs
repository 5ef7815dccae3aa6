//! Synthetic-prior engine: a mixture of SCM, BNN and GP dataset generators
//! conditioned on a sampled hyperparameter vector ψ.

pub mod bnn;
pub mod dataset;
pub mod gp;
pub mod hyper;
pub mod label;
pub mod meta;
pub mod scm;
pub mod shard;

pub use dataset::{sample_dataset, GeneratorKind, SampleLimits, SyntheticDataset};
pub use hyper::{field, Activation, PriorHyperparameters, PriorSpace};
pub use meta::MetaDistribution;
