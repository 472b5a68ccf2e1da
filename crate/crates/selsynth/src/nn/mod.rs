//! Differentiable-computation substrate: tensors, a reverse-mode tape,
//! dense layers, and optimizers.

pub mod layers;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use layers::{dense_forward, DenseLayer, Mlp, MlpVars};
pub use optim::{adam_step, AdamState};
pub use tape::{interp_row, Activation, Gradients, NodeId, Tape};
pub use tensor::Tensor2;
