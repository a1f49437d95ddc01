//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! All arithmetic is `f64` and every reduction has a fixed order, so a fixed
//! seed reproduces training bit for bit.

mod gradcheck;
mod loss;
mod matrix;
mod network;
mod optim;

pub use gradcheck::{
    check_objective, check_objective_report, grad_check, grad_check_report, GradCheckReport, Objective, OutputLoss,
    DEFAULT_STEP, RELATIVE_FLOOR,
};
pub use loss::{bce_loss, gaussian_kl_loss, mse_loss, BCE_CLAMP};
pub use matrix::Matrix;
pub use network::{
    sigmoid, Activation, DenseLayer, DenseNetwork, ForwardCache, LayerGradients, NetworkGradients,
};
pub use optim::{adam_step, AdamConfig, OptimizerState};

/// Hidden layer widths shared by every encoder, decoder, generator and
/// discriminator.
pub const HIDDEN_WIDTHS: [usize; 5] = [32, 64, 32, 16, 32];
