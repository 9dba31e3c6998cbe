//! Grasp adapter: a self-attention policy over a sliding window of tactile
//! change that outputs angle corrections, and the closed-loop controller
//! that runs it behind the stability estimator.

mod control;
mod model;
mod window;

pub use control::*;
pub use model::{
    adapt_sequences, adapter_mse, assemble_windows, train_adapter, train_adapter_on_windows, AdaptSample, AdapterConfig,
    AdapterModel, AttentionBlock, MAX_DELTA_DEG, MIN_WINDOWS,
};
pub use window::{build_window_features, make_token, Token, WindowBuffer, S_SUM_SCALE, THETA_SCALE, TOKEN_DIM, WINDOW};
