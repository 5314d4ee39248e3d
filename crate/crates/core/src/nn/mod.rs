//! Small numeric substrate: tensors, a differentiable tape, layers, Adam,
//! finite-difference checking and checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_sampled, GroupError};
pub use graph::{Graph, Var};
pub use layers::{dropout, BiGru, BiGruOutput, Biaffine, GruCell, Linear};
pub use optim::Adam;
pub use params::{Gradients, Init, ParamId, Parameter, ParameterStore};
pub use tensor::Tensor2;
