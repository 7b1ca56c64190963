//! Dense numeric kernel: tensors, seeded Gaussian streams, a tanh MLP with
//! hand-derived reverse-mode gradients, and AdamW.

mod adamw;
mod mlp;
mod rng;
mod tensor;

pub use adamw::{AdamwConfig, AdamwState, WarmupSchedule};
pub use mlp::{mlp_backward, Dense, ForwardCache, Mlp, MlpGrads};
pub use rng::{RngState, RngStream};
pub use tensor::Tensor;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(z))` without cancellation for large `|z|`.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}
