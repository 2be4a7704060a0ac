//! Minimal dense numerics for the Q-networks: MLP forward/backward, Adam,
//! and the Huber / quantile-Huber losses. All arithmetic is `f64`.

mod adam;
mod loss;
mod mlp;

pub use adam::{adam_step, AdamState};
pub(crate) use loss::quantile_huber_unchecked;
pub use loss::{
    huber, huber_grad, quantile_huber_loss, quantile_huber_loss_grad, quantile_midpoints,
};
pub use mlp::{BatchActivations, Dense, GradBundle, MlpParams};
