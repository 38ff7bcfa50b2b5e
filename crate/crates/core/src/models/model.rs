use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::VirefConfig;
use crate::data::{EmbeddingTable, FRAME_STREAMS};
use crate::diffcore::{load_checkpoint, save_checkpoint, AffineStack, LstmStack, ParameterStore, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_for;

pub const EMBEDDING: &str = "embedding";
pub const INIT_LOGITS: &str = "attention.init_logits";

/// The full model and its two ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Per-word stream attention with encoder re-runs.
    Viref,
    /// Encoder run once with fixed uniform stream weights.
    VirefA,
    /// No encoder; clip-level features initialize the decoder.
    VirefE,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [ModelVariant::Viref, ModelVariant::VirefA, ModelVariant::VirefE];

    pub fn name(self) -> &'static str {
        match self {
            Self::Viref => "viref",
            Self::VirefA => "viref_a",
            Self::VirefE => "viref_e",
        }
    }

    /// Display label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Self::Viref => "VIREF",
            Self::VirefA => "VIREF-a",
            Self::VirefE => "VIREF-e",
        }
    }

    pub fn uses_encoder(self) -> bool {
        self != Self::VirefE
    }

    pub fn uses_attention(self) -> bool {
        self == Self::Viref
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "viref" => Ok(Self::Viref),
            "viref_a" => Ok(Self::VirefA),
            "viref_e" => Ok(Self::VirefE),
            _ => Err(Error::Config(format!("unknown model variant {s:?} (expected viref, viref_a or viref_e)"))),
        }
    }
}

/// Saved next to a checkpoint so it can be rebuilt without the original config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub variant: ModelVariant,
    pub config: VirefConfig,
    pub embeddings_trainable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Scalar> {
    variant: ModelVariant,
    config: VirefConfig,
    params: ParameterStore<T>,
    pub(crate) encoder: Option<LstmStack>,
    pub(crate) decoder: LstmStack,
    pub(crate) fan: Option<AffineStack>,
    pub(crate) wen: AffineStack,
    pub(crate) fpn: Option<AffineStack>,
}

pub(crate) fn init_state_name(layer: usize) -> String {
    format!("encoder.layer{layer}.init_state")
}

impl<T: Scalar> Model<T> {
    /// Fresh model with seeded initialization.
    pub fn new(variant: ModelVariant, config: VirefConfig, seed: u64) -> Result<Self> {
        let mut model = Self::skeleton(variant, config)?;
        let cfg = &model.config;
        let mut params = ParameterStore::new();
        let emb = EmbeddingTable::<T>::random(cfg.vocab_size, cfg.embed_dim, seed);
        params.insert(EMBEDDING, emb.table, true)?;
        let mut rng = rng_for(seed, "init");
        if let Some(enc) = &model.encoder {
            enc.init_params(&mut params, &mut rng)?;
            for l in 0..cfg.encoder_layers {
                params.insert(init_state_name(l), Tensor::zeros(&[2 * cfg.hidden_dim]), true)?;
            }
        }
        model.decoder.init_params(&mut params, &mut rng)?;
        if let Some(fan) = &model.fan {
            params.insert(INIT_LOGITS, Tensor::zeros(&[FRAME_STREAMS]), true)?;
            fan.init_params(&mut params, &mut rng)?;
        }
        model.wen.init_params(&mut params, &mut rng)?;
        if let Some(fpn) = &model.fpn {
            fpn.init_params(&mut params, &mut rng)?;
        }
        model.params = params;
        Ok(model)
    }

    /// Wraps existing parameters, checking names and shapes against the variant.
    pub fn from_params(variant: ModelVariant, config: VirefConfig, params: ParameterStore<T>) -> Result<Self> {
        let reference = Self::new(variant, config, 0)?;
        let expected: Vec<&str> = reference.params.names().collect();
        let found: Vec<&str> = params.names().collect();
        if expected != found {
            let mut diff: Vec<String> = expected
                .iter()
                .filter(|n| !found.contains(n))
                .map(|n| format!("missing {n}"))
                .collect();
            diff.extend(found.iter().filter(|n| !expected.contains(n)).map(|n| format!("unexpected {n}")));
            return Err(Error::KeyMismatch(diff));
        }
        for (r, p) in reference.params.iter().zip(params.iter()) {
            if r.tensor.shape() != p.tensor.shape() {
                return Err(Error::shape(p.name.clone(), r.tensor.shape(), p.tensor.shape()));
            }
        }
        Ok(Self { params, ..reference })
    }

    fn skeleton(variant: ModelVariant, config: VirefConfig) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let encoder = match variant.uses_encoder() {
            true => Some(LstmStack::new("encoder", config.encoder_layers, config.encoder_input_dim(), h)?),
            false => None,
        };
        let decoder = LstmStack::new("decoder", config.decoder_layers, config.embed_dim, h)?;
        let fan = match variant.uses_attention() {
            true => Some(AffineStack::new("fan", h, &config.fan_widths)?),
            false => None,
        };
        let wen_in = if variant.uses_attention() { 2 * h } else { h };
        let wen = AffineStack::new("wen", wen_in, &config.wen_widths)?;
        let fpn = match variant {
            ModelVariant::VirefE => Some(AffineStack::new("fpn", config.clip_input_dim(), &config.fpn_widths)?),
            _ => None,
        };
        Ok(Self {
            variant,
            config,
            params: ParameterStore::new(),
            encoder,
            decoder,
            fan,
            wen,
            fpn,
        })
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn config(&self) -> &VirefConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.element_count()
    }

    pub fn embeddings_trainable(&self) -> bool {
        let i = self.params.index_of(EMBEDDING).expect("embedding always present");
        self.params.entry(i).trainable
    }

    /// Replaces the word embedding table.
    pub fn set_embeddings(&mut self, table: &EmbeddingTable<T>) -> Result<()> {
        let shape = [self.config.vocab_size, self.config.embed_dim];
        if table.table.shape() != shape {
            return Err(Error::shape(EMBEDDING, &shape, table.table.shape()));
        }
        let i = self.params.index_of(EMBEDDING).expect("embedding always present");
        let entry = self.params.entry_mut(i);
        entry.tensor = table.table.clone();
        entry.trainable = table.trainable;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            variant: self.variant,
            config: self.config.clone(),
            params: self.params.cast(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            fan: self.fan.clone(),
            wen: self.wen.clone(),
            fpn: self.fpn.clone(),
        }
    }

    pub fn meta(&self) -> ModelMeta {
        ModelMeta {
            variant: self.variant,
            config: self.config.clone(),
            embeddings_trainable: self.embeddings_trainable(),
        }
    }

    /// Writes the checkpoint at `path` and its metadata at `path` + `.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.params, path)?;
        std::fs::write(meta_path(path), serde_json::to_string_pretty(&self.meta())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mp = meta_path(path);
        if !mp.exists() {
            return Err(Error::MissingFile(mp));
        }
        let meta: ModelMeta = serde_json::from_str(&std::fs::read_to_string(&mp)?)?;
        let params = load_checkpoint(path)?;
        let mut model = Self::from_params(meta.variant, meta.config, params)?;
        let i = model.params.index_of(EMBEDDING).expect("embedding always present");
        model.params.entry_mut(i).trainable = meta.embeddings_trainable;
        Ok(model)
    }
}

pub fn meta_path(checkpoint: &Path) -> std::path::PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
