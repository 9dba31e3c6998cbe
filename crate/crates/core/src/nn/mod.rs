//! Small dense + self-attention network kernel with hand-written backward
//! passes. Everything is `f64` and row-major.

mod attention;
mod container;
mod loss;
mod matrix;
mod mlp;
mod optim;

pub use attention::{attention_backward, attention_forward, AttentionCache, AttentionGrads, AttentionParams};
pub use container::{Container, Tensor, CONTAINER_VERSION};
pub use loss::mse_loss;
pub use matrix::{softmax_rows, Matrix};
pub use mlp::{Activation, Dense, DenseGrads, Mlp, MlpCache, MlpGrads};
pub use optim::{adam_step, sgd_step, AdamState};

use rand::Rng;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
pub fn init_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Matrix {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches by construction")
}
