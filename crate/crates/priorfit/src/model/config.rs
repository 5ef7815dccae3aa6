//! Transformer architecture configuration.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Hard ceilings baked into the token layout.
pub const FEATURE_CEILING: usize = 100;
pub const CLASS_CEILING: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub heads: usize,
    /// Token feature width F; inputs are zero-padded to it.
    pub max_features: usize,
    /// Logit width C; classes beyond a task's count are masked out.
    pub max_classes: usize,
    /// Training-time sequence budget; inference may exceed it (extrapolation).
    pub max_train_len: usize,
    /// Width of the ψ style vector; 0 trains an unconditional model.
    pub style_dim: usize,
}

impl ModelConfig {
    /// Full-size configuration (12 layers, 512 embedding, 1024 hidden, 4 heads).
    pub fn paper() -> Self {
        ModelConfig {
            layers: 12,
            d_model: 512,
            d_ff: 1024,
            heads: 4,
            max_features: FEATURE_CEILING,
            max_classes: CLASS_CEILING,
            max_train_len: 1024,
            style_dim: 0,
        }
    }

    /// Desk-scale default: 4 layers, embedding 128, hidden 256, 4 heads.
    pub fn desk() -> Self {
        ModelConfig {
            layers: 4,
            d_model: 128,
            d_ff: 256,
            heads: 4,
            max_features: FEATURE_CEILING,
            max_classes: CLASS_CEILING,
            max_train_len: 256,
            style_dim: 0,
        }
    }

    pub fn with_style(mut self, style_dim: usize) -> Self {
        self.style_dim = style_dim;
        self
    }

    /// Input width of one token: features + missing mask + label one-hot.
    pub fn token_width(&self) -> usize {
        2 * self.max_features + self.max_classes
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "embedding size {} must be a positive multiple of {} heads",
                self.d_model, self.heads
            )));
        }
        if self.max_features == 0 || self.max_features > FEATURE_CEILING {
            return Err(Error::Config(format!(
                "max_features {} outside 1..={FEATURE_CEILING}",
                self.max_features
            )));
        }
        if self.max_classes < 2 || self.max_classes > CLASS_CEILING {
            return Err(Error::Config(format!(
                "max_classes {} outside 2..={CLASS_CEILING}",
                self.max_classes
            )));
        }
        if self.layers == 0 || self.d_ff == 0 || self.max_train_len == 0 {
            return Err(Error::Config("layers, d_ff and max_train_len must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_configs_validate() {
        assert!(ModelConfig::paper().validate().is_ok());
        assert!(ModelConfig::desk().validate().is_ok());
    }

    #[test]
    fn indivisible_heads_rejected() {
        let mut c = ModelConfig::desk();
        c.d_model = 130;
        assert!(c.validate().is_err());
    }

    #[test]
    fn feature_ceiling_enforced() {
        let mut c = ModelConfig::desk();
        c.max_features = 101;
        assert!(c.validate().is_err());
    }
}
