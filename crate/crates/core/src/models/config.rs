use serde::{Deserialize, Serialize};

use crate::data::{CLIP_STREAMS, EMBEDDING_DIM, FRAME_STREAMS};
use crate::error::{Error, Result};

/// Geometry of every model variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VirefConfig {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub hidden_dim: usize,
    /// Per-stream feature dimension `D`.
    pub stream_dim: usize,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub dropout: f64,
    /// Attention head widths; the last must be 5.
    pub fan_widths: Vec<usize>,
    /// Word-estimation head widths; the last must equal `vocab_size`.
    pub wen_widths: Vec<usize>,
    /// Clip-feature head widths (encoder-free baseline); the last must equal `hidden_dim`.
    pub fpn_widths: Vec<usize>,
}

impl Default for VirefConfig {
    fn default() -> Self {
        Self::full_scale()
    }
}

impl VirefConfig {
    /// Intermediate head widths follow the hidden size.
    pub fn with_dims(layers: usize, hidden_dim: usize, stream_dim: usize, vocab_size: usize, embed_dim: usize) -> Self {
        Self {
            encoder_layers: layers,
            decoder_layers: layers,
            hidden_dim,
            stream_dim,
            vocab_size,
            embed_dim,
            dropout: 0.2,
            fan_widths: vec![hidden_dim, hidden_dim, FRAME_STREAMS],
            wen_widths: vec![hidden_dim, hidden_dim, vocab_size],
            fpn_widths: vec![hidden_dim, hidden_dim, hidden_dim],
        }
    }

    /// Six layers, 4096-dimensional streams, 1024 words, 50-dimensional embeddings.
    pub fn full_scale() -> Self {
        Self::with_dims(6, 512, 4096, 1024, EMBEDDING_DIM)
    }

    pub fn streams(&self) -> usize {
        FRAME_STREAMS
    }

    pub fn encoder_input_dim(&self) -> usize {
        FRAME_STREAMS * self.stream_dim
    }

    pub fn clip_input_dim(&self) -> usize {
        CLIP_STREAMS * self.stream_dim
    }

    /// Re-derives the head output widths after `vocab_size` or `hidden_dim` change.
    pub fn sync_head_outputs(&mut self) {
        if let Some(last) = self.wen_widths.last_mut() {
            *last = self.vocab_size;
        }
        if let Some(last) = self.fpn_widths.last_mut() {
            *last = self.hidden_dim;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("hidden_dim", self.hidden_dim),
            ("stream_dim", self.stream_dim),
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.encoder_layers != self.decoder_layers {
            return Err(Error::Config(format!(
                "encoder ({}) and decoder ({}) layer counts must match for layer-wise state transfer",
                self.encoder_layers, self.decoder_layers
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        for (name, w) in [("fan", &self.fan_widths), ("wen", &self.wen_widths), ("fpn", &self.fpn_widths)] {
            if w.len() != 3 {
                return Err(Error::Config(format!("{name} needs exactly 3 widths, got {}", w.len())));
            }
            if w.contains(&0) {
                return Err(Error::Config(format!("{name} widths must be positive: {w:?}")));
            }
        }
        if self.fan_widths[2] != FRAME_STREAMS {
            return Err(Error::Config(format!("fan output must be {FRAME_STREAMS}, got {}", self.fan_widths[2])));
        }
        if self.wen_widths[2] != self.vocab_size {
            return Err(Error::Config(format!(
                "wen output must equal vocab_size {}, got {}",
                self.vocab_size, self.wen_widths[2]
            )));
        }
        if self.fpn_widths[2] != self.hidden_dim {
            return Err(Error::Config(format!(
                "fpn output must equal hidden_dim {}, got {}",
                self.hidden_dim, self.fpn_widths[2]
            )));
        }
        Ok(())
    }
}
