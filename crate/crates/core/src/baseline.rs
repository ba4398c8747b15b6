//! First-order baselines: plain SGD and Adam.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub fn sgd_step(theta: &mut Matrix, grad: &Matrix, lr: f64) -> Result<()> {
    if grad.dim() != theta.dim() {
        return Err(Error::dim(format!("gradient {:?} for parameters {:?}", grad.dim(), theta.dim())));
    }
    theta.scaled_add(-lr, grad);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid Adam settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shape: (usize, usize), cfg: AdamConfig) -> Self {
        Self {
            m: Matrix::zeros(shape),
            v: Matrix::zeros(shape),
            step_count: 0,
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(theta: &mut Matrix, grad: &Matrix, state: &mut AdamState) -> Result<()> {
    if grad.dim() != theta.dim() || state.m.dim() != theta.dim() {
        return Err(Error::dim(format!(
            "gradient {:?}, moments {:?} for parameters {:?}",
            grad.dim(),
            state.m.dim(),
            theta.dim()
        )));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (lr, eps) = (state.lr, state.eps);
    ndarray::Zip::from(theta)
        .and(&mut state.m)
        .and(&mut state.v)
        .and(grad)
        .for_each(|w, m, v, &g| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    Ok(())
}
