use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::sim::THETA_MAX_DEG;
use crate::tactile::{delta_frame, TaxelFrame, TAXELS};

/// Tokens per window.
pub const WINDOW: usize = 16;
/// `ΔS (32) + per-finger S sum + θ`.
pub const TOKEN_DIM: usize = TAXELS + 2;
pub const S_SUM_SCALE: f64 = 100.0;
pub const THETA_SCALE: f64 = THETA_MAX_DEG;

pub type Token = [f64; TOKEN_DIM];

/// Token for one tick: `[ΔS, mean per-finger S sum / 100, θ / 90]`.
pub fn make_token(ds: &[f64; TAXELS], s: &[f64; TAXELS], theta_deg: f64) -> Token {
    let mut t = [0.0; TOKEN_DIM];
    t[..TAXELS].copy_from_slice(ds);
    let half = TAXELS / 2;
    let sum_a: f64 = s[..half].iter().sum();
    let sum_b: f64 = s[half..].iter().sum();
    t[TAXELS] = 0.5 * (sum_a + sum_b) / S_SUM_SCALE;
    t[TAXELS + 1] = theta_deg / THETA_SCALE;
    t
}

/// The last [`WINDOW`] tokens, oldest first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WindowBuffer {
    tokens: VecDeque<Token>,
    last_frame: Option<TaxelFrame>,
}

impl WindowBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a live reading. The first frame gets a zero `ΔS`; later ones
    /// must follow the previous frame by exactly one tick.
    pub fn push_frame(&mut self, frame: &TaxelFrame, theta_deg: f64) -> Result<()> {
        let ds = match &self.last_frame {
            Some(prev) => delta_frame(frame, prev)?,
            None => [0.0; TAXELS],
        };
        self.push_token(make_token(&ds, &frame.values, theta_deg));
        self.last_frame = Some(frame.clone());
        Ok(())
    }

    /// Append a precomputed token (e.g. from a recorded dataset).
    pub fn push_token(&mut self, token: Token) {
        if self.tokens.len() == WINDOW {
            self.tokens.pop_front();
        }
        self.tokens.push_back(token);
    }

    /// Number of real (non-padding) tokens.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter()
    }

    /// `WINDOW × TOKEN_DIM`, zero rows first when fewer than `WINDOW` tokens
    /// have been seen.
    pub fn to_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(WINDOW, TOKEN_DIM);
        let pad = WINDOW - self.tokens.len();
        for (i, t) in self.tokens.iter().enumerate() {
            m.row_mut(pad + i).copy_from_slice(t);
        }
        m
    }
}

/// Window over the tail of a `(frame, θ)` history.
pub fn build_window_features(history: &[(TaxelFrame, f64)]) -> Result<WindowBuffer> {
    if history.is_empty() {
        return Err(Error::Data("window needs at least one frame".into()));
    }
    let mut w = WindowBuffer::new();
    // one extra frame so the oldest kept token has a real ΔS
    let start = history.len().saturating_sub(WINDOW + 1);
    for (f, theta) in &history[start..] {
        w.push_frame(f, *theta)?;
    }
    Ok(w)
}
