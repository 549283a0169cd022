use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    /// Longest token sequence the model accepts.
    pub context: usize,
    pub vocab_size: usize,
    /// Rows in the learned positional tables.
    pub positions: usize,
    pub mlp_ratio: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            width: 128,
            layers: 4,
            heads: 4,
            context: 1024,
            vocab_size: 260,
            positions: 1024,
            mlp_ratio: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(ModelError::Config(s));
        if self.width == 0 || self.layers == 0 || self.heads == 0 || self.mlp_ratio == 0 {
            return bad("width, layers, heads and mlp_ratio must be positive".into());
        }
        if self.width % self.heads != 0 {
            return bad(format!("width {} not divisible by {} heads", self.width, self.heads));
        }
        if self.positions < self.context {
            return bad(format!("{} positions cannot cover context {}", self.positions, self.context));
        }
        if self.vocab_size < 5 {
            return bad("vocabulary needs coordinates plus four special tokens".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Plain gradient-descent rate for the density binner, when attached.
    pub density_lr: f64,
    pub learn_tau: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            batch_size: 12,
            steps: 2000,
            density_lr: 1e-2,
            learn_tau: false,
            seed: 0,
        }
    }
}
