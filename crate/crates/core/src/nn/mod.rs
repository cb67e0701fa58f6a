//! Small dense network, momentum SGD, learning-rate schedule and gradient checks.

mod gradcheck;
mod mlp;
mod optim;
mod schedule;

pub use gradcheck::{check_with, gradient_check, DEFAULT_STEP};
pub use mlp::{argmax_rows, softmax_rows, Dense, ForwardResult, Gradients, Mlp, PROB_FLOOR};
pub use optim::Sgd;
pub use schedule::cosine_lr;
