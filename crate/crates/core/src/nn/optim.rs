use crate::error::{Error, Result};

fn check(params: &[f64], grads: &[f64], lr: f64, step: usize) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim(
            "optimizer step",
            format!("{} parameters, {} gradients", params.len(), grads.len()),
        ));
    }
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::Contract(format!("learning rate must be > 0, got {lr}")));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Training {
            stage: "step",
            index: step,
            reason: format!("non-finite gradient at parameter {i}"),
        });
    }
    Ok(())
}

/// Plain gradient descent, `w ← w - lr·g`. `step` is only used in errors.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64, step: usize) -> Result<()> {
    check(params, grads, lr, step)?;
    for (w, g) in params.iter_mut().zip(grads) {
        *w -= lr * g;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    check(params, grads, lr, state.t as usize)?;
    if state.m.len() != params.len() {
        return Err(Error::dim(
            "adam_step",
            format!("state sized for {}, got {} parameters", state.m.len(), params.len()),
        ));
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
