//! Dense tensors, reverse-mode differentiation, Adam with freeze masks, a
//! finite-difference gradient oracle, and parameter checkpoints.

pub mod checkpoint;
mod gradcheck;
mod graph;
mod kernels;
mod optim;
mod tensor;

pub use gradcheck::{finite_difference_gradient, relative_error};
pub use graph::{Gradients, Graph, Var};
pub use kernels::{huber_loss, layer_norm, softmax};
pub use optim::{adam_step, AdamConfig, Binding, ParamStore, Parameter};
pub use tensor::Tensor;
