use rand::Rng;

use super::config::VirefConfig;
use super::forward::{Features, PassContext};
use super::model::{Model, ModelVariant};
use crate::data::vocab::RESERVED;
use crate::data::{ClipFeatureSet, FeatureSequence, TokenSequence, Vocabulary, CLIP_STREAMS, FRAME_STREAMS};
use crate::diffcore::{finite_difference_check, GradCheckReport};
use crate::error::Result;
use crate::seed::rng_for;

/// Finite-difference check of the teacher-forced per-token cross-entropy of
/// one sequence, over every trainable parameter of the model.
pub fn gradient_check(
    model: &Model<f64>,
    features: Features<'_, f64>,
    tokens: &TokenSequence,
    epsilon: f64,
) -> Result<GradCheckReport> {
    let targets = tokens.targets().to_vec();
    let mask = vec![true; targets.len()];
    finite_difference_check(
        |g| {
            let mut ctx = PassContext::eval();
            let logits = model.teacher_forced_logits(g, features, tokens.inputs(), &mut ctx)?;
            g.cross_entropy(&logits, &targets, &mask)
        },
        model.params(),
        epsilon,
    )
}

/// Words per expression, frames per pair and scale of the tiny check.
pub const TINY_WORDS: usize = 4;
pub const TINY_FRAMES: usize = 3;

/// `layers` deep, `H = 8`, `D = 6`, `N = 12`, `E = 4`.
pub fn tiny_config(layers: usize) -> VirefConfig {
    VirefConfig::with_dims(layers, 8, 6, 12, 4)
}

/// Gradient check of a freshly initialized variant on random features and a
/// random four-word expression, everything drawn from `seed`.
pub fn tiny_gradient_check(variant: ModelVariant, layers: usize, seed: u64, epsilon: f64) -> Result<GradCheckReport> {
    let config = tiny_config(layers);
    let model = Model::<f64>::new(variant, config.clone(), seed)?;
    let mut rng = rng_for(seed, "gradcheck-features");
    let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let frames = FeatureSequence::new(TINY_FRAMES, config.stream_dim, draw(TINY_FRAMES * FRAME_STREAMS * config.stream_dim))?;
    let clip = ClipFeatureSet::new(config.stream_dim, draw(CLIP_STREAMS * config.stream_dim))?;
    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend((tokens.len()..config.vocab_size).map(|i| format!("w{i}")));
    let vocab = Vocabulary::from_tokens(tokens)?;
    let first = RESERVED.len();
    let words: Vec<usize> = (0..TINY_WORDS).map(|_| rng.random_range(first..config.vocab_size)).collect();
    let seq = TokenSequence::from_words(&words, &vocab)?;
    let features = Features {
        frames: Some(&frames),
        clip: Some(&clip),
    };
    gradient_check(&model, features, &seq, epsilon)
}
