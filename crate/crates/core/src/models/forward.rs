use super::attention::{scale_features_node, AttentionWeights};
use super::model::{init_state_name, Model, ModelVariant, EMBEDDING, INIT_LOGITS};
use crate::data::{ClipFeatureSet, FeatureSequence, PairData, FRAME_STREAMS};
use crate::diffcore::{Dropout, Graph, LayerInput, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Conditioning inputs for one (main, context) pair. The encoder variants
/// read `frames`; the encoder-free variant reads `clip`.
#[derive(Debug, Clone, Copy)]
pub struct Features<'a, T> {
    pub frames: Option<&'a FeatureSequence<T>>,
    pub clip: Option<&'a ClipFeatureSet<T>>,
}

impl<'a, T> Features<'a, T> {
    pub fn frames(frames: &'a FeatureSequence<T>) -> Self {
        Self {
            frames: Some(frames),
            clip: None,
        }
    }

    pub fn clip(clip: &'a ClipFeatureSet<T>) -> Self {
        Self {
            frames: None,
            clip: Some(clip),
        }
    }
}

impl<'a, T> From<&'a PairData<T>> for Features<'a, T> {
    fn from(p: &'a PairData<T>) -> Self {
        Self {
            frames: Some(&p.frames),
            clip: Some(&p.clip),
        }
    }
}

/// Per-pass state: dropout masks, encoder invocation count and test knobs.
#[derive(Debug)]
pub struct PassContext {
    pub dropout: Dropout,
    pub encoder_runs: usize,
    /// Replace every per-word attention with the initial attention.
    pub fan_bypass: bool,
    /// Feed scaled raw features through the layer-0 input weights instead of
    /// the per-stream projection shortcut.
    pub direct_scaling: bool,
}

impl PassContext {
    pub fn eval() -> Self {
        Self::new(Dropout::eval())
    }

    pub fn new(dropout: Dropout) -> Self {
        Self {
            dropout,
            encoder_runs: 0,
            fan_bypass: false,
            direct_scaling: false,
        }
    }
}

/// Graph nodes shared by every encoder run of one pair.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Concatenated raw `5·D` frame vectors.
    frames: Vec<NodeId>,
    /// Per-frame `5 × 4H` stream projections through the layer-0 input weights.
    projected: Vec<NodeId>,
    clip: Option<NodeId>,
    /// Initial attention (full model) or fixed uniform weights (no-attention ablation).
    base_attention: Option<NodeId>,
}

/// Nodes produced by one decoder step.
#[derive(Debug, Clone)]
pub struct StepNodes {
    pub logits: NodeId,
    pub state: Vec<NodeId>,
    pub attention: Option<NodeId>,
}

impl<T: Scalar> Model<T> {
    fn frames_of<'a>(&self, f: &Features<'a, T>) -> Result<&'a FeatureSequence<T>> {
        let frames = f
            .frames
            .ok_or_else(|| Error::Contract(format!("{} needs per-frame features", self.variant())))?;
        if frames.dim() != self.config().stream_dim {
            return Err(Error::shape("frame stream dim", &[self.config().stream_dim], &[frames.dim()]));
        }
        Ok(frames)
    }

    fn clip_of<'a>(&self, f: &Features<'a, T>) -> Result<&'a ClipFeatureSet<T>> {
        let clip = f
            .clip
            .ok_or_else(|| Error::Contract(format!("{} needs clip-level features", self.variant())))?;
        if clip.dim() != self.config().stream_dim {
            return Err(Error::shape("clip stream dim", &[self.config().stream_dim], &[clip.dim()]));
        }
        Ok(clip)
    }

    /// Places the conditioning inputs on the graph.
    pub fn prepare(&self, g: &mut Graph<'_, T>, features: Features<'_, T>, ctx: &PassContext) -> Result<Prepared> {
        let mut prep = Prepared {
            frames: Vec::new(),
            projected: Vec::new(),
            clip: None,
            base_attention: None,
        };
        match self.variant() {
            ModelVariant::VirefE => {
                let clip = self.clip_of(&features)?;
                prep.clip = Some(g.constant(clip.concatenated().to_vec()));
            }
            variant => {
                let frames = self.frames_of(&features)?;
                let enc = self.encoder.as_ref().expect("encoder variant");
                prep.frames = (0..frames.frames()).map(|i| g.constant(frames.frame(i).to_vec())).collect();
                if !ctx.direct_scaling {
                    let w = g.param(&enc.w_ih_name(0))?;
                    for &x in &prep.frames {
                        let p = g.segment_project(x, w, FRAME_STREAMS)?;
                        prep.projected.push(p);
                    }
                }
                prep.base_attention = Some(match variant {
                    ModelVariant::Viref => {
                        let logits = g.param(INIT_LOGITS)?;
                        g.softmax(logits)
                    }
                    _ => g.constant(AttentionWeights::<T>::uniform().0.to_vec()),
                });
            }
        }
        Ok(prep)
    }

    /// Runs the encoder over every frame scaled by `weights` and returns its
    /// final per-layer `[h; c]` states.
    pub fn run_encoder(
        &self,
        g: &mut Graph<'_, T>,
        prep: &Prepared,
        weights: NodeId,
        ctx: &mut PassContext,
    ) -> Result<Vec<NodeId>> {
        let enc = self
            .encoder
            .as_ref()
            .ok_or_else(|| Error::UnsupportedVariant {
                variant: self.variant().to_string(),
                what: "encoder".into(),
            })?;
        if g.len_of(weights) != FRAME_STREAMS {
            return Err(Error::shape("attention weights", &[FRAME_STREAMS], &[g.len_of(weights)]));
        }
        ctx.encoder_runs += 1;
        let mut state = (0..enc.num_layers())
            .map(|l| g.param(&init_state_name(l)))
            .collect::<Result<Vec<_>>>()?;
        for (i, &x) in prep.frames.iter().enumerate() {
            let input = if ctx.direct_scaling {
                LayerInput::Raw(scale_features_node(g, x, weights)?)
            } else {
                LayerInput::Projected(g.weighted_segment_sum(prep.projected[i], weights)?)
            };
            state = enc.step(g, input, &state, &mut ctx.dropout)?;
        }
        Ok(state)
    }

    /// Initial decoder state for the pair.
    pub fn init_decoder(&self, g: &mut Graph<'_, T>, prep: &Prepared, ctx: &mut PassContext) -> Result<Vec<NodeId>> {
        match self.variant() {
            ModelVariant::VirefE => {
                let fpn = self.fpn.as_ref().expect("fpn present");
                let clip = prep.clip.ok_or_else(|| Error::Contract("clip features not prepared".into()))?;
                let h = fpn.forward(g, clip, &mut ctx.dropout)?;
                let zeros = g.constant(vec![T::zero(); self.config().hidden_dim]);
                let s = g.concat(&[h, zeros]);
                Ok(vec![s; self.config().decoder_layers])
            }
            _ => {
                let a = prep
                    .base_attention
                    .ok_or_else(|| Error::Contract("frame features not prepared".into()))?;
                self.run_encoder(g, prep, a, ctx)
            }
        }
    }

    /// One decoder step from `word` and the previous state.
    pub fn decode_step_nodes(
        &self,
        g: &mut Graph<'_, T>,
        prep: &Prepared,
        word: usize,
        state: &[NodeId],
        ctx: &mut PassContext,
    ) -> Result<StepNodes> {
        let n = self.config().vocab_size;
        if word >= n {
            return Err(Error::InvalidToken { id: word, vocab_size: n });
        }
        let table = g.param(EMBEDDING)?;
        let emb = g.gather(table, word, self.config().embed_dim)?;
        let next = self.decoder.step(g, LayerInput::Raw(emb), state, &mut ctx.dropout)?;
        let top = *next.last().expect("at least one layer");
        let h = self.decoder.hidden(g, top)?;
        let (wen_in, attention) = match self.variant() {
            ModelVariant::Viref => {
                let fan = self.fan.as_ref().expect("fan present");
                let a = if ctx.fan_bypass {
                    prep.base_attention.expect("frames prepared")
                } else {
                    let logits = fan.forward(g, h, &mut ctx.dropout)?;
                    g.softmax(logits)
                };
                let enc_state = self.run_encoder(g, prep, a, ctx)?;
                let enc = self.encoder.as_ref().expect("encoder present");
                let enc_top = enc.hidden(g, *enc_state.last().expect("at least one layer"))?;
                (g.concat(&[h, enc_top]), Some(a))
            }
            _ => (h, None),
        };
        let logits = self.wen.forward(g, wen_in, &mut ctx.dropout)?;
        Ok(StepNodes {
            logits,
            state: next,
            attention,
        })
    }

    /// Teacher-forced logits for every position of `inputs`.
    pub fn teacher_forced_logits(
        &self,
        g: &mut Graph<'_, T>,
        features: Features<'_, T>,
        inputs: &[usize],
        ctx: &mut PassContext,
    ) -> Result<Vec<NodeId>> {
        if inputs.is_empty() {
            return Err(Error::Empty("no decoder inputs".into()));
        }
        let prep = self.prepare(g, features, ctx)?;
        let mut state = self.init_decoder(g, &prep, ctx)?;
        let mut logits = Vec::with_capacity(inputs.len());
        for &w in inputs {
            let step = self.decode_step_nodes(g, &prep, w, &state, ctx)?;
            logits.push(step.logits);
            state = step.state;
        }
        Ok(logits)
    }
}
