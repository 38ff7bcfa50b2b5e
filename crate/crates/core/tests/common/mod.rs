#![allow(dead_code)]

pub mod oracle;

use rand::Rng;
use viref::data::{ClipFeatureSet, FeatureSequence, Vocabulary, CLIP_STREAMS, FRAME_STREAMS};
use viref::models::VirefConfig;
use viref::seed::rng_for;

/// Reserved tokens followed by `w0, w1, …` up to `n` entries.
pub fn vocab(n: usize) -> Vocabulary {
    let mut tokens: Vec<String> = ["<start>", "<end>", "<unk>", "<nil>"].map(String::from).to_vec();
    let mut i = 0;
    while tokens.len() < n {
        tokens.push(format!("w{i}"));
        i += 1;
    }
    Vocabulary::from_tokens(tokens).unwrap()
}

pub fn tiny_config() -> VirefConfig {
    VirefConfig::with_dims(2, 8, 6, 12, 4)
}

pub fn random_frames(frames: usize, dim: usize, seed: u64) -> FeatureSequence<f64> {
    let mut rng = rng_for(seed, "test-frames");
    let data = (0..frames * FRAME_STREAMS * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeatureSequence::new(frames, dim, data).unwrap()
}

pub fn random_clip(dim: usize, seed: u64) -> ClipFeatureSet<f64> {
    let mut rng = rng_for(seed, "test-clip");
    let data = (0..CLIP_STREAMS * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    ClipFeatureSet::new(dim, data).unwrap()
}
