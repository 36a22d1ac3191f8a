//! Numerical substrate: dense tensors, a reverse-mode tape, MLP layers and
//! the Adam optimizer.

mod activation;
mod adam;
mod gradcheck;
mod mlp;
mod tape;
mod tensor;

pub use activation::{elu, sigmoid, softplus, Activation};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{compare_gradients, eval_loss, finite_difference, grad_check, value_and_grad, GradCheckReport};
pub use mlp::{BoundMlp, Dense, MlpParams};
pub use tape::{Gradients, Graph, Var};
pub use tensor::Tensor;
