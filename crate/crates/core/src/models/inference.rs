use super::attention::AttentionWeights;
use super::forward::{Features, PassContext, Prepared};
use super::model::{Model, ModelVariant, INIT_LOGITS};
use crate::data::{FeatureSequence, TokenSequence};
use crate::diffcore::{log_softmax, softmax, Graph, LstmState};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Output of one value-level decoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T> {
    pub log_probs: Vec<T>,
    pub state: LstmState<T>,
    pub attention: Option<AttentionWeights<T>>,
}

impl<T: Scalar> StepOutput<T> {
    pub fn probs(&self) -> Vec<T> {
        self.log_probs.iter().map(|v| v.exp()).collect()
    }
}

/// Log-likelihood of a full sequence with per-step detail.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceScore<T> {
    pub log_prob: T,
    pub step_log_probs: Vec<T>,
    pub encoder_runs: usize,
}

/// Incremental evaluation-mode decoding over one pair. Conditioning inputs
/// are placed on the graph once; every step appends to the same tape.
pub struct Session<'m, T: Scalar> {
    model: &'m Model<T>,
    graph: Graph<'m, T>,
    prep: Prepared,
    ctx: PassContext,
}

impl<'m, T: Scalar> Session<'m, T> {
    pub fn new(model: &'m Model<T>, features: Features<'_, T>) -> Result<Self> {
        Self::with_context(model, features, PassContext::eval())
    }

    pub fn with_context(model: &'m Model<T>, features: Features<'_, T>, ctx: PassContext) -> Result<Self> {
        let mut graph = Graph::new(model.params());
        let prep = model.prepare(&mut graph, features, &ctx)?;
        Ok(Self {
            model,
            graph,
            prep,
            ctx,
        })
    }

    pub fn encoder_runs(&self) -> usize {
        self.ctx.encoder_runs
    }

    pub fn init(&mut self) -> Result<LstmState<T>> {
        let s = self.model.init_decoder(&mut self.graph, &self.prep, &mut self.ctx)?;
        Ok(LstmState::from_nodes(&self.graph, &s))
    }

    pub fn step(&mut self, word: usize, state: &LstmState<T>) -> Result<StepOutput<T>> {
        let cfg = self.model.config();
        if state.num_layers() != cfg.decoder_layers
            || state.layers.iter().any(|(h, c)| h.len() != cfg.hidden_dim || c.len() != cfg.hidden_dim)
        {
            return Err(Error::shape(
                "decoder state",
                &[cfg.decoder_layers, 2, cfg.hidden_dim],
                &[state.num_layers(), 2, state.layers.first().map_or(0, |l| l.0.len())],
            ));
        }
        let nodes = state.to_nodes(&mut self.graph);
        let out = self
            .model
            .decode_step_nodes(&mut self.graph, &self.prep, word, &nodes, &mut self.ctx)?;
        let logits = self.graph.value(out.logits);
        let log_probs = log_softmax(logits);
        if log_probs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("decoder log-probabilities after word {word}")));
        }
        let attention = match out.attention {
            Some(a) => Some(AttentionWeights::from_slice(self.graph.value(a))?),
            None => None,
        };
        Ok(StepOutput {
            log_probs,
            state: LstmState::from_nodes(&self.graph, &out.state),
            attention,
        })
    }
}

impl<T: Scalar> Model<T> {
    /// Softmax of the learned initial stream logits.
    pub fn initial_attention(&self) -> Result<AttentionWeights<T>> {
        if self.variant() != ModelVariant::Viref {
            return Err(Error::UnsupportedVariant {
                variant: self.variant().to_string(),
                what: "initial attention".into(),
            });
        }
        let logits = self.params().require(INIT_LOGITS)?;
        Ok(AttentionWeights(softmax(logits.data()).try_into().expect("five logits")))
    }

    /// Final encoder state over `frames` scaled by `weights`.
    pub fn encode_sequence(&self, frames: &FeatureSequence<T>, weights: &AttentionWeights<T>) -> Result<LstmState<T>> {
        let mut g = Graph::new(self.params());
        let mut ctx = PassContext::eval();
        let prep = self.prepare(&mut g, Features::frames(frames), &ctx)?;
        let w = g.constant(weights.0.to_vec());
        let s = self.run_encoder(&mut g, &prep, w, &mut ctx)?;
        Ok(LstmState::from_nodes(&g, &s))
    }

    pub fn decoder_init(&self, features: Features<'_, T>) -> Result<LstmState<T>> {
        Session::new(self, features)?.init()
    }

    pub fn decode_step(&self, features: Features<'_, T>, word: usize, state: &LstmState<T>) -> Result<StepOutput<T>> {
        Session::new(self, features)?.step(word, state)
    }

    pub fn score_sequence(&self, features: Features<'_, T>, tokens: &TokenSequence) -> Result<SequenceScore<T>> {
        self.score_ids(features, tokens.ids())
    }

    /// Teacher-forced score of `ids[1..]` given `ids[..len-1]`, without
    /// checking that `ids` is a well-formed expression.
    pub fn score_ids(&self, features: Features<'_, T>, ids: &[usize]) -> Result<SequenceScore<T>> {
        if ids.len() < 2 {
            return Err(Error::MalformedSequence(format!("nothing to score in {ids:?}")));
        }
        let mut session = Session::new(self, features)?;
        let mut state = session.init()?;
        let mut steps = Vec::with_capacity(ids.len() - 1);
        for (&w, &target) in ids.iter().zip(&ids[1..]) {
            if target >= self.config().vocab_size {
                return Err(Error::InvalidToken {
                    id: target,
                    vocab_size: self.config().vocab_size,
                });
            }
            let out = session.step(w, &state)?;
            steps.push(out.log_probs[target]);
            state = out.state;
        }
        Ok(SequenceScore {
            log_prob: steps.iter().copied().sum(),
            step_log_probs: steps,
            encoder_runs: session.encoder_runs(),
        })
    }

    /// `log P(tokens | features)`, the comprehension score.
    pub fn sequence_log_prob(&self, features: Features<'_, T>, tokens: &TokenSequence) -> Result<T> {
        Ok(self.score_sequence(features, tokens)?.log_prob)
    }
}
