use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelVariant, VirefConfig};
use crate::synth::{WorldConfig, MANIFEST_FILE, VOCAB_FILE};
use crate::tasks::TrainConfig;

/// Network sizes. Stream width and vocabulary size come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub layers: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub dropout: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden_dim: 32,
            embed_dim: 16,
            dropout: 0.2,
        }
    }
}

impl ModelSettings {
    pub fn model_config(&self, stream_dim: usize, vocab_size: usize) -> VirefConfig {
        let mut c = VirefConfig::with_dims(self.layers, self.hidden_dim, stream_dim, vocab_size, self.embed_dim);
        c.dropout = self.dropout;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    /// Corpus directory written by `synth`.
    pub data_dir: PathBuf,
    /// Defaults to `<data_dir>/manifest.jsonl`. Feature paths inside it are
    /// relative to its directory.
    pub manifest: Option<PathBuf>,
    /// Defaults to `<data_dir>/vocab.txt`.
    pub vocab: Option<PathBuf>,
    /// Optional `token v1 … vE` text file.
    pub embeddings: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathSettings {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            manifest: None,
            vocab: None,
            embeddings: None,
            checkpoint: "runs/model.vrfc".into(),
            report_dir: "runs/reports".into(),
        }
    }
}

impl PathSettings {
    pub fn manifest(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.data_dir.join(MANIFEST_FILE))
    }

    pub fn vocab(&self) -> PathBuf {
        self.vocab.clone().unwrap_or_else(|| self.data_dir.join(VOCAB_FILE))
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        fix(&mut self.checkpoint);
        fix(&mut self.report_dir);
        for p in [&mut self.manifest, &mut self.vocab, &mut self.embeddings].into_iter().flatten() {
            fix(p);
        }
    }
}

/// Everything one experiment needs. The top-level seed replaces the world
/// and training seeds so a run is reproduced from a single number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub variant: ModelVariant,
    pub world: WorldConfig,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub paths: PathSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            variant: ModelVariant::Viref,
            world: WorldConfig::default(),
            model: ModelSettings::default(),
            train: TrainConfig {
                lr: 1e-3,
                max_epochs: 60,
                ..TrainConfig::default()
            },
            paths: PathSettings::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML; relative paths are taken from `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        c.paths.rebase(base);
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Pushes the top-level seed into every component.
    pub fn resolved(mut self) -> Self {
        self.world.seed = self.seed;
        self.train.seed = self.seed;
        self
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.train.validate()?;
        self.model.model_config(1, 5).validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml(), Path::new("")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_and_relative_paths() {
        let c = RunConfig::from_toml("seed = 7\nvariant = \"viref_e\"\n[model]\nhidden_dim = 16\n[paths]\ndata_dir = \"d\"\n", Path::new("/x")).unwrap();
        assert_eq!(c.variant, ModelVariant::VirefE);
        assert_eq!(c.model.hidden_dim, 16);
        assert_eq!(c.model.layers, 2);
        assert_eq!(c.paths.manifest(), Path::new("/x/d/manifest.jsonl"));
        assert_eq!(c.paths.checkpoint, Path::new("/x/runs/model.vrfc"));
        let r = c.resolved();
        assert_eq!((r.world.seed, r.train.seed), (7, 7));
    }

    #[test]
    fn bad_values_rejected() {
        assert!(RunConfig::from_toml("variant = \"nope\"", Path::new("")).is_err());
        assert!(RunConfig::from_toml("colour = 1", Path::new("")).is_err());
        let c = RunConfig::from_toml("[model]\nlayers = 0", Path::new("")).unwrap();
        assert!(c.validate().is_err());
    }
}
