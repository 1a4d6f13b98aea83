use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelError;

fn default_n_mels() -> usize {
    80
}

fn default_n_audio_ctx() -> usize {
    1500
}

fn default_n_text_ctx() -> usize {
    448
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub n_layers: usize,
    pub width: usize,
    pub heads: usize,
    pub vocab_size: usize,
    #[serde(default = "default_n_text_ctx")]
    pub n_text_ctx: usize,
    #[serde(default = "default_n_mels")]
    pub n_mels: usize,
    #[serde(default = "default_n_audio_ctx")]
    pub n_audio_ctx: usize,
}

/// The five standard sizes as (name, layers, width, heads).
pub const PRESETS: [(&str, usize, usize, usize); 5] = [
    ("tiny", 4, 384, 6),
    ("base", 6, 512, 8),
    ("small", 12, 768, 12),
    ("medium", 24, 1024, 16),
    ("large", 32, 1280, 20),
];

impl ModelConfig {
    pub fn preset(name: &str, vocab_size: usize) -> Result<Self, ModelError> {
        let &(name, n_layers, width, heads) = PRESETS
            .iter()
            .find(|p| p.0 == name)
            .ok_or_else(|| ModelError::Config(format!("unknown preset {name:?}")))?;
        let cfg = Self {
            name: name.to_string(),
            n_layers,
            width,
            heads,
            vocab_size,
            n_text_ctx: default_n_text_ctx(),
            n_mels: default_n_mels(),
            n_audio_ctx: default_n_audio_ctx(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.n_layers == 0 || self.width == 0 || self.heads == 0 {
            return bad("layers, width and heads must be positive".into());
        }
        if !self.width.is_multiple_of(self.heads) {
            return bad(format!(
                "width {} not divisible by heads {}",
                self.width, self.heads
            ));
        }
        if self.vocab_size == 0 || self.n_text_ctx == 0 || self.n_mels == 0 || self.n_audio_ctx == 0 {
            return bad("vocab_size, n_text_ctx, n_mels and n_audio_ctx must be positive".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for (name, layers, width, heads) in PRESETS {
            let c = ModelConfig::preset(name, 1000).unwrap();
            assert_eq!((c.n_layers, c.width, c.heads), (layers, width, heads));
            assert_eq!(c.head_dim() * c.heads, c.width);
            assert_eq!(c.head_dim(), 64);
        }
        assert!(ModelConfig::preset("huge", 10).is_err());
    }

    #[test]
    fn toml_round_trip_with_defaults() {
        let text = "name = \"toy\"\nn_layers = 2\nwidth = 64\nheads = 4\nvocab_size = 1863\n";
        let c = ModelConfig::from_toml(text).unwrap();
        assert_eq!(c.n_text_ctx, 448);
        assert_eq!(c.n_audio_ctx, 1500);
        assert_eq!(ModelConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_indivisible_width() {
        let text = "name = \"x\"\nn_layers = 1\nwidth = 10\nheads = 3\nvocab_size = 5\n";
        assert!(matches!(ModelConfig::from_toml(text), Err(ModelError::Config(_))));
    }
}
