//! Loss, gradient clipping and the Adam optimizer.
//!
//! Everything here works on flat `f64` slices; the model exposes its
//! parameters and gradients in a fixed flattened order so these routines
//! stay independent of the network structure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default global-norm clipping threshold.
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

/// Mean absolute error over a batch, with its subgradient w.r.t. the
/// predictions: `sign(p_i - y_i) / B`, where `sign(0) = 0`.
pub fn mae_loss(predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(Error::Contract(format!(
            "mae_loss needs equal nonempty slices, got {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    let b = predictions.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(predictions.len());
    for (p, y) in predictions.iter().zip(targets) {
        let d = p - y;
        loss += d.abs();
        grad.push(sign(d) / b);
    }
    Ok((loss / b, grad))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Global L2 norm of a flat gradient vector.
pub fn global_norm(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Scale `grads` in place so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig::new(1e-4)
    }
}

/// Per-parameter first and second moment estimates, plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        AdamState {
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            config,
        }
    }

    /// One Adam update, in place on `params`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "adam state sized for {} params, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}
