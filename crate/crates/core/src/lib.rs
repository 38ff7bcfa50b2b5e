//! Relational referring expressions for object pairs in video.
//!
//! Generation runs an encoder-decoder LSTM whose decoder re-weights the five
//! per-frame feature streams at every word and re-runs the encoder with those
//! weights. Comprehension ranks candidate pairs by the probability the same
//! generator assigns to the query expression.

pub mod data;
pub mod diffcore;
pub mod error;
pub mod cli;
pub mod metrics;
pub mod models;
pub mod scalar;
pub mod seed;
pub mod synth;
pub mod tasks;

pub use error::{Error, LoadError, Result};
pub use scalar::Scalar;

pub type Tensor32 = diffcore::Tensor<f32>;
pub type Tensor64 = diffcore::Tensor<f64>;
pub type ParameterStore32 = diffcore::ParameterStore<f32>;
pub type ParameterStore64 = diffcore::ParameterStore<f64>;
pub type Model32 = models::Model<f32>;
pub type Model64 = models::Model<f64>;
