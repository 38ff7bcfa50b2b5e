//! Differentiable numerical core: tensors, a reverse-mode tape, LSTM and
//! fully connected stacks, Adam, finite-difference checking and checkpoints.

pub mod adam;
pub mod affine;
pub mod checkpoint;
pub mod dropout;
pub mod functional;
pub mod gradcheck;
pub mod graph;
pub mod lstm;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use affine::{affine_stack_forward, AffineStack};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use dropout::{Dropout, DropoutMode};
pub use functional::{cross_entropy, log_softmax, softmax};
pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport};
pub use graph::{GradientMap, Graph, NodeId};
pub use lstm::{lstm_forward, LayerInput, LstmStack, LstmState};
pub use params::{uniform_tensor, Param, ParameterStore};
pub use tensor::Tensor;
