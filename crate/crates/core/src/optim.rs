//! Adam with bias correction and per-parameter learning rates.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::float;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Parameters together with their Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub params: Vec<f64>,
    /// Learning rate of each parameter.
    pub lr: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of completed updates.
    pub step: u64,
    /// D-SSIM weight the state was optimized with.
    pub lambda: f64,
}

impl FitState {
    pub fn new(params: Vec<f64>, lr: Vec<f64>, lambda: f64) -> Result<Self> {
        if lr.len() != params.len() {
            return Err(invalid("one learning rate per parameter is required"));
        }
        let n = params.len();
        Ok(Self { params, lr, m: vec![0.0; n], v: vec![0.0; n], step: 0, lambda })
    }

    pub fn with_uniform_lr(params: Vec<f64>, lr: f64, lambda: f64) -> Self {
        let n = params.len();
        Self { params, lr: vec![lr; n], m: vec![0.0; n], v: vec![0.0; n], step: 0, lambda }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.params.len();
        if self.lr.len() != n || self.m.len() != n || self.v.len() != n {
            return Err(invalid("optimizer moments do not match the parameter count"));
        }
        Ok(())
    }
}

/// One Adam update in place. A non-finite gradient leaves the state untouched.
pub fn adam_step(state: &mut FitState, grads: &[f64]) -> Result<()> {
    state.validate()?;
    if grads.len() != state.params.len() {
        return Err(invalid(format!("{} gradients for {} parameters", grads.len(), state.params.len())));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient {i} is {} at step {}", grads[i], state.step)));
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(BETA1, t);
    let bc2 = 1.0 - libm::pow(BETA2, t);
    for i in 0..grads.len() {
        let g = grads[i];
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        state.params[i] -= state.lr[i] * m_hat / (float::sqrt(v_hat) + EPSILON);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut s = FitState::with_uniform_lr(vec![1.0, -2.0], 0.1, 0.2);
        adam_step(&mut s, &[0.0, 0.0]).unwrap();
        assert_eq!(s.params, vec![1.0, -2.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut s = FitState::with_uniform_lr(vec![0.0, 0.0, 0.0], 0.01, 0.2);
        let g = [0.5, -3.0, 0.5];
        adam_step(&mut s, &g).unwrap();
        for i in 0..3 {
            let expect = -0.01 * g[i] / (g[i].abs() + EPSILON);
            assert!((s.params[i] - expect).abs() < 1e-15);
        }
        assert_eq!(s.params[0], s.params[2]);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut s = FitState::with_uniform_lr(vec![1.0], 0.1, 0.2);
        assert!(matches!(adam_step(&mut s, &[f64::NAN]), Err(Error::NonFinite(_))));
        assert_eq!(s.step, 0);
        assert_eq!(s.params, vec![1.0]);
        assert!(adam_step(&mut s, &[1.0, 2.0]).is_err());
    }
}
