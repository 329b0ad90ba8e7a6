use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

/// Shapes, network sizes, loss weights and seeds of one FACT tokenizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    /// Timesteps per action chunk (`H`).
    pub horizon: usize,
    /// Action dimensions (`S`).
    pub action_dims: usize,
    /// Tokens per chunk (`L`), at most `horizon`.
    pub code_length: usize,
    /// Bits per token (`D`); the vocabulary holds `2^D` ids.
    pub bits: usize,
    pub width: usize,
    pub encoder_depth: usize,
    pub decoder_depth: usize,
    pub heads: usize,
    /// Hidden size of each MLP as a multiple of `width`.
    pub mlp_ratio: usize,
    /// Euler steps used by reconstruction.
    pub ode_steps: usize,
    pub entropy_weight: f64,
    pub commit_weight: f64,
    pub entropy_temperature: f64,
    /// Seeds parameter initialization.
    pub seed: u64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            horizon: 32,
            action_dims: 7,
            code_length: 20,
            bits: 12,
            width: 64,
            encoder_depth: 2,
            decoder_depth: 2,
            heads: 4,
            mlp_ratio: 2,
            ode_steps: 10,
            entropy_weight: 0.1,
            commit_weight: 0.02,
            entropy_temperature: 1.0,
            seed: 0,
        }
    }
}

/// Largest supported bits per token; token ids are `u32`.
pub const MAX_BITS: usize = 24;

impl TokenizerConfig {
    pub fn vocab_size(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("horizon", self.horizon),
            ("action_dims", self.action_dims),
            ("code_length", self.code_length),
            ("bits", self.bits),
            ("width", self.width),
            ("heads", self.heads),
            ("mlp_ratio", self.mlp_ratio),
            ("ode_steps", self.ode_steps),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be positive"));
        }
        if self.code_length > self.horizon {
            return Err(format!(
                "code_length {} exceeds horizon {}",
                self.code_length, self.horizon
            ));
        }
        if self.bits > MAX_BITS {
            return Err(format!("bits {} exceeds the supported {MAX_BITS}", self.bits));
        }
        if !self.width.is_multiple_of(self.heads) || !self.width.is_multiple_of(2) {
            return Err(format!(
                "width {} must be even and divisible by heads {}",
                self.width, self.heads
            ));
        }
        if !(self.entropy_temperature > 0.0) {
            return Err("entropy_temperature must be positive".into());
        }
        if !(self.entropy_weight >= 0.0 && self.commit_weight >= 0.0) {
            return Err("loss weights must be non-negative".into());
        }
        Ok(())
    }
}
