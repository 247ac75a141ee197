use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyper-parameters, stored on disk as `config.json` with exactly
/// these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub intermediate_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub vocab_size: usize,
    pub rope_theta: f64,
    pub rms_eps: f64,
}

impl Default for ModelConfig {
    /// Desk-scale toy: r = 256 / 64 = 4.0, the same baseline ratio as
    /// Llama-3.2-1B. Vocabulary is 256 bytes plus BOS/EOS/PAD.
    fn default() -> Self {
        Self {
            hidden_size: 64,
            intermediate_size: 256,
            num_layers: 2,
            num_heads: 4,
            vocab_size: 259,
            rope_theta: 10_000.0,
            rms_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// Llama-3.2-1B MLP geometry with a byte vocabulary and a caller-chosen depth.
    pub fn llama_1b_shape(num_layers: usize) -> Self {
        Self {
            hidden_size: 2048,
            intermediate_size: 8192,
            num_layers,
            num_heads: 32,
            vocab_size: 259,
            rope_theta: 500_000.0,
            rms_eps: 1e-5,
        }
    }

    /// Llama-3.2-3B MLP geometry with a byte vocabulary and a caller-chosen depth.
    pub fn llama_3b_shape(num_layers: usize) -> Self {
        Self {
            hidden_size: 3072,
            intermediate_size: 8192,
            num_layers,
            num_heads: 24,
            vocab_size: 259,
            rope_theta: 500_000.0,
            rms_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden_size == 0 {
            return bad("hidden_size must be >= 1".into());
        }
        if self.intermediate_size == 0 {
            return bad("intermediate_size must be >= 1".into());
        }
        if self.num_layers == 0 {
            return bad("num_layers must be >= 1".into());
        }
        if self.num_heads == 0 || !self.hidden_size.is_multiple_of(self.num_heads) {
            return bad(format!(
                "hidden_size {} not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            ));
        }
        if !self.head_dim().is_multiple_of(2) {
            return bad(format!("head dimension {} must be even for rotary encoding", self.head_dim()));
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be >= 1".into());
        }
        if !(self.rope_theta > 0.0 && self.rope_theta.is_finite()) {
            return bad(format!("rope_theta must be positive, got {}", self.rope_theta));
        }
        if !(self.rms_eps > 0.0 && self.rms_eps.is_finite()) {
            return bad(format!("rms_eps must be positive, got {}", self.rms_eps));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads.max(1)
    }

    /// r = d_ff / d_model.
    pub fn expansion_ratio(&self) -> f64 {
        self.intermediate_size as f64 / self.hidden_size as f64
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ModelConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
