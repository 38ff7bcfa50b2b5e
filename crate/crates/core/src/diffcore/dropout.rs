use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

/// Inverted dropout with its own mask stream. In eval mode it is the identity
/// and draws nothing.
#[derive(Debug, Clone)]
pub struct Dropout {
    p: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn eval() -> Self {
        Self { p: 0.0, rng: None }
    }

    pub fn train(p: f64, seed: u64) -> Self {
        Self {
            p,
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn new(mode: DropoutMode, p: f64, seed: u64) -> Self {
        match mode {
            DropoutMode::Train => Self::train(p, seed),
            DropoutMode::Eval => Self::eval(),
        }
    }

    pub fn mode(&self) -> DropoutMode {
        if self.rng.is_some() {
            DropoutMode::Train
        } else {
            DropoutMode::Eval
        }
    }

    pub fn apply<T: Scalar>(&mut self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let Some(rng) = self.rng.as_mut() else {
            return Ok(x);
        };
        if self.p <= 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - self.p));
        let mask = (0..g.len_of(x))
            .map(|_| if rng.random::<f64>() < self.p { T::zero() } else { keep })
            .collect();
        g.dropout_mask(x, mask)
    }
}
