//! Deterministic numeric kernel: matrices, seeded RNG, dense networks with
//! manual backpropagation and plain SGD.

mod config;
mod mat;
mod mlp;
mod rng;

pub use config::{Bandwidth, Kernel, TrainConfig};
pub use mat::Mat2;
pub(crate) use mat::{dot, sq_dist};
pub use mlp::{
    argmax_rows, cross_entropy, sgd_step, softmax_rows, ForwardPass, Gradients, MlpModel,
    PROB_FLOOR,
};
pub use rng::Rng;
