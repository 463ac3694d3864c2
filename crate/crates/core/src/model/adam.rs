use serde::{Deserialize, Serialize};

use super::{ModelParams, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0003,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::domain("invalid Adam hyperparameters"))
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn zeros(len: usize) -> Self {
        Self { m: vec![T::zero(); len], v: vec![T::zero(); len], t: 0 }
    }
}

/// One bias-corrected Adam update. Moments are kept in `T`; the scalar
/// corrections are computed in f64.
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &[T],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::domain("Adam buffers do not match the parameter count"));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
    let c1 = T::of(1.0 / (1.0 - cfg.beta1.powi(t)));
    let c2 = T::of(1.0 / (1.0 - cfg.beta2.powi(t)));
    let lr = T::of(cfg.learning_rate);
    let eps = T::of(cfg.epsilon);
    let data = params.flat_mut();
    for i in 0..data.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + one_b1 * g;
        state.v[i] = b2 * state.v[i] + one_b2 * g * g;
        let m_hat = state.m[i] * c1;
        let v_hat = state.v[i] * c2;
        data[i] = data[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
