use serde::{Deserialize, Serialize};

use super::policy::PolicyParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Divide the moments by `1 − βᵗ` before the update. Off by default.
    pub bias_correction: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            bias_correction: false,
        }
    }
}

/// First/second moment estimates for the update
/// `θ ← θ − α · m / (√v + ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, n_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    /// Applies one step to `theta`. A non-finite gradient is rejected and
    /// leaves both `theta` and the moments untouched.
    pub fn apply(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::domain(format!(
                "optimizer holds {} moments but got {} parameters and {} gradients",
                self.m.len(),
                theta.len(),
                grad.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite gradient component {i}: {}",
                grad[i]
            )));
        }
        let OptimizerConfig {
            learning_rate: lr,
            beta1,
            beta2,
            epsilon,
            bias_correction,
        } = self.config;
        self.step += 1;
        let (c1, c2) = if bias_correction {
            let t = self.step as i32;
            (1.0 - beta1.powi(t), 1.0 - beta2.powi(t))
        } else {
            (1.0, 1.0)
        };
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m = self.m[i] / c1;
            let v = self.v[i] / c2;
            theta[i] -= lr * m / (v.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Descends `grad` on θ (never on θ_old).
pub fn optimizer_step(params: &mut PolicyParams, grad: &[f64], state: &mut OptimizerState) -> Result<()> {
    state.apply(params.theta_mut(), grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_theta() {
        let mut state = OptimizerState::new(OptimizerConfig::default(), 3);
        let mut theta = vec![0.5, -1.0, 2.0];
        state.apply(&mut theta, &[0.0; 3]).unwrap();
        assert_eq!(theta, vec![0.5, -1.0, 2.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_hand_value() {
        let mut state = OptimizerState::new(OptimizerConfig::default(), 1);
        let mut theta = vec![0.0];
        state.apply(&mut theta, &[1.0]).unwrap();
        let expected = -0.001 * 0.1 / (0.001f64.sqrt() + 1e-8);
        assert!((theta[0] - expected).abs() < 1e-15);
        assert!((theta[0] + 0.003162).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut state = OptimizerState::new(OptimizerConfig::default(), 2);
        let mut theta = vec![1.0, 1.0];
        let err = state.apply(&mut theta, &[0.1, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
        assert_eq!(theta, vec![1.0, 1.0]);
        assert_eq!(state.step, 0);
        assert!(state.m.iter().all(|&m| m == 0.0));
        assert!(state.apply(&mut theta, &[0.1]).is_err());
    }

    #[test]
    fn bias_correction_first_step_is_lr_sized() {
        let config = OptimizerConfig {
            bias_correction: true,
            ..Default::default()
        };
        let mut state = OptimizerState::new(config, 1);
        let mut theta = vec![0.0];
        state.apply(&mut theta, &[3.0]).unwrap();
        assert!((theta[0] + 0.001).abs() < 1e-9);
    }

    #[test]
    fn zero_learning_rate_is_inert() {
        let config = OptimizerConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        let mut state = OptimizerState::new(config, 2);
        let mut theta = vec![0.25, -0.75];
        for k in 0..50 {
            state.apply(&mut theta, &[k as f64, -1.0]).unwrap();
        }
        assert_eq!(theta, vec![0.25, -0.75]);
    }
}
