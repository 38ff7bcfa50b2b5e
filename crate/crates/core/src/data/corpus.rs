use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::batch::keep_sequence;
use super::features::{load_clip_features, load_feature_sequence, ClipFeatureSet, FeatureSequence};
use super::manifest::{read_manifest, PairRecord, Split};
use super::vocab::{encode_refexp, TokenSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A record together with its loaded features.
#[derive(Debug, Clone, PartialEq)]
pub struct PairData<T> {
    pub record: PairRecord,
    pub frames: FeatureSequence<T>,
    pub clip: ClipFeatureSet<T>,
}

/// One referring expression of one pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub pair: usize,
    pub tokens: TokenSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus<T> {
    pub root: PathBuf,
    pub pairs: Vec<PairData<T>>,
}

impl<T: Scalar> Corpus<T> {
    /// Reads the manifest and every feature file it references.
    pub fn load(manifest: &Path) -> Result<Self> {
        let records = read_manifest(manifest)?;
        let root = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut pairs = Vec::with_capacity(records.len());
        for record in records {
            let frames: FeatureSequence<T> = load_feature_sequence(&root.join(&record.feature_path))?;
            if frames.frames() != record.frame_count {
                return Err(Error::Config(format!(
                    "{}: manifest says {} frames, feature file has {}",
                    record.pair_id,
                    record.frame_count,
                    frames.frames()
                )));
            }
            let clip = load_clip_features(&root.join(&record.clip_feature_path))?;
            pairs.push(PairData { record, frames, clip });
        }
        Ok(Self { root, pairs })
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.record.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Every expression of the split that survives the length filter.
    pub fn examples(&self, split: Split, vocab: &Vocabulary, max_len: usize) -> Result<Vec<Example>> {
        let mut out = Vec::new();
        for i in self.indices(split) {
            for re in &self.pairs[i].record.refexps {
                let tokens = encode_refexp(re, vocab)?;
                if keep_sequence(&tokens, max_len) {
                    out.push(Example { pair: i, tokens });
                }
            }
        }
        Ok(out)
    }

    /// Pair indices grouped by video, videos in id order.
    pub fn videos(&self) -> BTreeMap<String, Vec<usize>> {
        let mut m: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, p) in self.pairs.iter().enumerate() {
            m.entry(p.record.video_id.clone()).or_default().push(i);
        }
        m
    }

    pub fn train_refexps(&self) -> Vec<&str> {
        self.pairs
            .iter()
            .filter(|p| p.record.split == Split::Train)
            .flat_map(|p| p.record.refexps.iter().map(String::as_str))
            .collect()
    }
}
