use crate::data::FRAME_STREAMS;
use crate::diffcore::{softmax, Graph, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Five stream weights; post-softmax they lie in (0,1) and sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionWeights<T>(pub [T; FRAME_STREAMS]);

impl<T: Scalar> AttentionWeights<T> {
    pub fn uniform() -> Self {
        Self([T::one() / T::from_usize_exact(FRAME_STREAMS); FRAME_STREAMS])
    }

    pub fn from_logits(logits: &[T]) -> Result<Self> {
        if logits.len() != FRAME_STREAMS {
            return Err(Error::shape("attention logits", &[FRAME_STREAMS], &[logits.len()]));
        }
        let p = softmax(logits);
        Ok(Self(p.try_into().expect("length checked")))
    }

    pub fn from_slice(v: &[T]) -> Result<Self> {
        let arr: [T; FRAME_STREAMS] = v
            .try_into()
            .map_err(|_| Error::shape("attention weights", &[FRAME_STREAMS], &[v.len()]))?;
        Ok(Self(arr))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn is_distribution(&self, tol: f64) -> bool {
        let sum: T = self.0.iter().copied().sum();
        self.0.iter().all(|&v| v >= T::zero() && v <= T::one()) && (sum - T::one()).abs().to_f64_lossy() <= tol
    }
}

/// Multiplies stream `k` of one frame by `a[k]` and concatenates in stream order.
pub fn scale_features<T: Scalar>(frame: &[Vec<T>], a: &AttentionWeights<T>) -> Result<Vec<T>> {
    if frame.len() != FRAME_STREAMS {
        return Err(Error::shape("frame streams", &[FRAME_STREAMS], &[frame.len()]));
    }
    let dim = frame[0].len();
    let mut out = Vec::with_capacity(FRAME_STREAMS * dim);
    for (k, s) in frame.iter().enumerate() {
        if s.len() != dim {
            return Err(Error::shape(format!("stream {k}"), &[dim], &[s.len()]));
        }
        out.extend(s.iter().map(|&v| v * a.0[k]));
    }
    Ok(out)
}

/// Graph form: `frame` is a concatenated `5·D` node, `weights` a 5-node.
pub fn scale_features_node<T: Scalar>(g: &mut Graph<'_, T>, frame: NodeId, weights: NodeId) -> Result<NodeId> {
    if g.len_of(weights) != FRAME_STREAMS {
        return Err(Error::shape("attention weights", &[FRAME_STREAMS], &[g.len_of(weights)]));
    }
    g.scale_segments(frame, weights)
}
