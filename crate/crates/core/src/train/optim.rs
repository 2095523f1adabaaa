//! Adam and AdamW over a list of parameter tensors.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros = |t: &Tensor| vec![0.0; t.len()];
        AdamState { m: params.iter().map(zeros).collect(), v: params.iter().map(zeros).collect(), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// Bias-corrected Adam step with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    adamw_step(params, grads, state, lr, 0.0)
}

/// Adam with decoupled weight decay: θ ← θ(1 − lr·wd) before the Adam update.
pub fn adamw_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} parameters, {} gradients, {} moment slots", params.len(), grads.len(), state.m.len()),
        ));
    }
    if let Some(i) =
        (0..params.len()).find(|&i| params[i].shape() != grads[i].shape() || params[i].len() != state.m[i].len())
    {
        return Err(Error::shape("adam_step", format!("parameter {i} and its gradient differ in shape")));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let shrink = 1.0 - lr * weight_decay;
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((theta, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
            *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            if weight_decay != 0.0 {
                *theta *= shrink;
            }
            *theta -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
    Ok(())
}
