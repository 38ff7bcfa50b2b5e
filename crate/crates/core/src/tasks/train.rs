use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{filter_and_pad, Corpus, Example, Vocabulary, MAX_RE_LEN};
use crate::diffcore::{adam_step, AdamConfig, AdamState, Dropout, GradientMap, Graph, ParameterStore};
use crate::error::{Error, Result};
use crate::models::{Features, Model, PassContext};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Stop after this many updates even mid-epoch.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub max_len: usize,
    /// Apply dropout during training updates.
    pub dropout: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 10,
            max_epochs: 100,
            patience: 5,
            max_steps: None,
            seed: 0,
            max_len: MAX_RE_LEN,
            dropout: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        if self.max_len < 2 {
            return Err(Error::Config(format!("max_len must be at least 2, got {}", self.max_len)));
        }
        Ok(())
    }
}

/// Per-epoch token-weighted mean cross-entropy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub val: Vec<f64>,
}

impl LossHistory {
    fn write_column(values: &[f64], path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (e, v) in values.iter().enumerate() {
            writeln!(f, "{} {v}", e + 1)?;
        }
        f.flush()?;
        Ok(())
    }

    /// `train_loss.txt` and `val_loss.txt`, one `epoch value` line each.
    pub fn write(&self, dir: &Path) -> Result<()> {
        Self::write_column(&self.train, &dir.join("train_loss.txt"))?;
        Self::write_column(&self.val, &dir.join("val_loss.txt"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: LossHistory,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val: f64,
    pub steps: usize,
    pub epochs_run: usize,
}

/// Teacher-forced loss and gradient of a group of examples. The loss is the
/// sum of per-token cross-entropies; the caller divides by the token count.
fn example_gradient<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus<T>,
    ex: &Example,
    ctx: PassContext,
    with_grad: bool,
) -> Result<(f64, usize, Option<GradientMap<T>>)> {
    let mut ctx = ctx;
    let mut g = Graph::new(model.params());
    let pair = &corpus.pairs[ex.pair];
    let inputs = ex.tokens.inputs();
    let logits = model.teacher_forced_logits(&mut g, Features::from(pair), inputs, &mut ctx)?;
    let targets = ex.tokens.targets();
    let mask = vec![true; targets.len()];
    let mean = g.cross_entropy(&logits, targets, &mask)?;
    let total = g.scale(mean, T::from_usize_exact(targets.len()));
    let value = g.scalar(total).to_f64_lossy();
    let grads = if with_grad && value.is_finite() { Some(g.backward(total)?) } else { None };
    Ok((value, targets.len(), grads))
}

/// Token-weighted mean cross-entropy in eval mode.
pub fn evaluate_loss<T: Scalar>(model: &Model<T>, corpus: &Corpus<T>, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("no examples to evaluate".into()));
    }
    let parts = examples
        .par_iter()
        .map(|ex| example_gradient(model, corpus, ex, PassContext::eval(), false))
        .collect::<Result<Vec<_>>>()?;
    let (sum, count) = parts.iter().fold((0.0, 0usize), |(s, c), p| (s + p.0, c + p.1));
    Ok(sum / count as f64)
}

/// Shuffles, then groups neighbours of similar length into batches, then
/// shuffles the batch order.
fn assemble_batches(examples: &[Example], batch_size: usize, vocab: &Vocabulary, max_len: usize, rng: &mut impl rand::Rng) -> Result<Vec<Vec<usize>>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    let window = batch_size * 20;
    for chunk in order.chunks_mut(window) {
        chunk.sort_by_key(|&i| examples[i].tokens.len());
    }
    let mut batches: Vec<Vec<usize>> = Vec::new();
    for chunk in order.chunks(batch_size) {
        let seqs: Vec<_> = chunk.iter().map(|&i| examples[i].tokens.clone()).collect();
        let padded = filter_and_pad(&seqs, max_len, vocab)?;
        batches.push(padded.kept_indices.iter().map(|&k| chunk[k]).collect());
    }
    batches.shuffle(rng);
    Ok(batches)
}

/// Adam on masked teacher-forced cross-entropy with early stopping on the
/// validation loss. The model ends up holding the best-validation parameters.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    corpus: &Corpus<T>,
    train_examples: &[Example],
    val_examples: &[Example],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_examples.is_empty() {
        return Err(Error::Empty("training split has no usable expressions".into()));
    }
    if val_examples.is_empty() {
        return Err(Error::Empty("validation split has no usable expressions".into()));
    }
    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(model.params());
    let mut rng = rng_for(config.seed, "train-batches");
    let p = model.config().dropout;
    let mut history = LossHistory::default();
    let mut best: Option<(f64, usize, ParameterStore<T>)> = None;
    let mut steps = 0usize;
    let mut epochs_run = 0;

    'epochs: for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        let batches = assemble_batches(train_examples, config.batch_size, vocab, config.max_len, &mut rng)?;
        let (mut epoch_sum, mut epoch_tokens) = (0.0, 0usize);
        for batch in batches {
            let step = steps;
            let results = batch
                .par_iter()
                .map(|&i| {
                    let ctx = if config.dropout && p > 0.0 {
                        PassContext::new(Dropout::train(p, derive_seed(config.seed, &format!("dropout-{step}-{i}"))))
                    } else {
                        PassContext::eval()
                    };
                    example_gradient(model, corpus, &train_examples[i], ctx, true)
                })
                .collect::<Result<Vec<_>>>()?;
            let tokens: usize = results.iter().map(|r| r.1).sum();
            let loss_sum: f64 = results.iter().map(|r| r.0).sum();
            let loss = loss_sum / tokens as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            let mut grads = GradientMap::zeros_like(model.params());
            for (_, _, g) in &results {
                grads.accumulate(g.as_ref().expect("finite loss has gradients"))?;
            }
            grads.scale(T::one() / T::from_usize_exact(tokens));
            if !grads.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            adam_step(model.params_mut(), &grads, &mut state, &adam)?;
            if !model.params().is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            epoch_sum += loss_sum;
            epoch_tokens += tokens;
            steps += 1;
            if config.max_steps.is_some_and(|m| steps >= m) {
                record_epoch(model, corpus, val_examples, &mut history, &mut best, epoch, epoch_sum / epoch_tokens as f64)?;
                break 'epochs;
            }
        }
        record_epoch(model, corpus, val_examples, &mut history, &mut best, epoch, epoch_sum / epoch_tokens.max(1) as f64)?;
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if epoch - best_epoch >= config.patience {
            break;
        }
    }
    let (best_val, best_epoch, params) = best.expect("at least one epoch ran");
    model.params_mut().assign_from(&params)?;
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val,
        steps,
        epochs_run,
    })
}

fn record_epoch<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus<T>,
    val_examples: &[Example],
    history: &mut LossHistory,
    best: &mut Option<(f64, usize, ParameterStore<T>)>,
    epoch: usize,
    train_loss: f64,
) -> Result<()> {
    let val = evaluate_loss(model, corpus, val_examples)?;
    history.train.push(train_loss);
    history.val.push(val);
    if best.as_ref().is_none_or(|b| val < b.0) {
        *best = Some((val, epoch, model.params().clone()));
    }
    Ok(())
}
