//! Dense tensors, a reverse-mode differentiation graph, multilayer
//! perceptrons and the optimizer everything else trains with.

pub mod graph;
pub mod io;
pub mod mlp;
pub mod optim;
pub mod tensor;
pub mod train;

pub use graph::{Gradients, Graph, NodeId, Op};
pub use mlp::{Activation, Dense, Mlp, MlpNodes, MlpSpec};
pub use optim::{Adam, AdamConfig};
pub use tensor::Tensor;
pub use train::{train, train_from, Loss, TrainConfig, Trained};
