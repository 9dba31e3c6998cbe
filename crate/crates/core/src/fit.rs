//! Minibatch plumbing shared by the generator and adapter trainers.

use crate::error::Result;
use crate::par::{self, ExecMode};

/// Per-epoch losses, `(1/2N)·Σ(â - a)²` in degrees², over the full train and
/// validation splits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

impl TrainHistory {
    /// Final validation mean squared error (twice the last loss).
    pub fn final_val_mse(&self) -> Option<f64> {
        self.val_loss.last().map(|l| 2.0 * l)
    }
}

/// Samples per work item when a batch is split across threads.
pub(crate) const CHUNK: usize = 16;

/// Evaluate `f` on fixed-size chunks of `idx` and sum the results in chunk
/// order. `f` returns `(Σ e², Σ ∂/∂w)` with `e = pred - target` as the
/// upstream gradient, so dividing by the batch size gives the mean-squared
/// loss gradient. Chunking does not depend on `mode`, so neither does the sum.
pub(crate) fn batch_gradient<F>(mode: ExecMode, idx: &[usize], n_params: usize, f: F) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&[usize]) -> Result<(f64, Vec<f64>)> + Sync + Send,
{
    let chunks: Vec<&[usize]> = idx.chunks(CHUNK).collect();
    let parts = par::map(mode, &chunks, |c| f(c));
    let mut sse = 0.0;
    let mut grad = vec![0.0; n_params];
    for part in parts {
        let (s, g) = part?;
        sse += s;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((sse, grad))
}

/// Per-feature mean and standard deviation; near-constant features get a
/// unit scale so they pass through centered but unscaled.
pub(crate) fn standardizer<'a, I>(rows: I, dim: usize) -> (Vec<f64>, Vec<f64>)
where
    I: Iterator<Item = &'a [f64]> + Clone,
{
    let mut mean = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows.clone() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
        n += 1;
    }
    let n = n.max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-9 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}
