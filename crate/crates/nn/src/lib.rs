//! Dense `f64` tensors, a tape-based reverse-mode autodiff graph, and the handful of
//! layers the coreference model is built from: ReLU feed-forward blocks, an LSTM cell,
//! embedding tables, bilinear forms and inverted dropout. Also Adam and a binary
//! checkpoint format.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod param;
pub mod tensor;

pub use error::{NnError, Result};
pub use graph::{sigmoid_scalar, softmax, Graph, Var};
pub use layers::{bilinear, Embedding, FeedForward, FfBlock, Linear, LstmCell, LstmState};
pub use optim::{Adam, AdamConfig};
pub use param::{Gradients, Init, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
