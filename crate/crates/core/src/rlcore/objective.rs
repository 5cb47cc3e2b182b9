//! Clipped surrogate, feedback-augmented objective, value regression and
//! the cross-entropy loss, each with an analytic gradient over θ.

use serde::{Deserialize, Serialize};

use super::policy::{self, backprop, check_mask, check_obs, forward, PolicyParams};
use crate::error::{Error, Result};
use crate::linalg;

/// One `(s, a, r, s′)` interaction.
///
/// `mask` is the active action set when `a` was chosen and `logp_old` is
/// `log π_θold(a|s)` recorded at collection time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub logp_old: f64,
    pub feedback: Option<f64>,
    pub mask: Vec<bool>,
}

impl Transition {
    /// Re-records `logp_old` from the frozen snapshot of `params`.
    pub fn relabel_logp_old(&mut self, params: &PolicyParams) -> Result<()> {
        let shape = params.shape();
        check_obs(&shape, &self.state)?;
        check_mask(&shape, &self.mask)?;
        let fwd = forward(&shape, params.theta_old(), &self.state);
        self.logp_old = policy::log_prob(&fwd.logits, &self.mask, self.action)?;
        Ok(())
    }

    fn validate(&self, params: &PolicyParams) -> Result<()> {
        let shape = params.shape();
        check_obs(&shape, &self.state)?;
        check_obs(&shape, &self.next_state)?;
        check_mask(&shape, &self.mask)?;
        if !self.reward.is_finite() || !self.logp_old.is_finite() {
            return Err(Error::domain("transition reward and logp_old must be finite"));
        }
        if let Some(f) = self.feedback {
            if !(-1.0..=1.0).contains(&f) {
                return Err(Error::domain(format!("feedback score {f} outside [-1, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub value_coef: f64,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            lambda: 0.5,
            gamma: 0.99,
            epochs: 4,
            minibatch: 32,
            value_coef: 0.5,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::domain(format!("clip radius {} outside (0, 1)", self.clip_eps)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::domain(format!("feedback weight {} is negative", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::domain(format!("discount {} outside [0, 1]", self.gamma)));
        }
        if self.epochs == 0 || self.minibatch == 0 {
            return Err(Error::domain("epochs and minibatch must be positive"));
        }
        Ok(())
    }
}

/// Scalar objective with its gradient over the flat θ.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// `min(ρA, clip(ρ, 1−ε, 1+ε)A)`
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    unclipped.min(clipped)
}

/// One-step advantage `r + γ·V(s′) − V(s)` under the frozen value head,
/// with `V(s′) = 0` after a terminal step.
pub fn advantage(t: &Transition, params: &PolicyParams, gamma: f64) -> Result<f64> {
    let v_s = policy::state_value_old(&t.state, params)?;
    let v_next = if t.done {
        0.0
    } else {
        policy::state_value_old(&t.next_state, params)?
    };
    Ok(t.reward + gamma * v_next - v_s)
}

/// The value head's regression target `r + γ·V_old(s′)`.
pub fn value_target(t: &Transition, params: &PolicyParams, gamma: f64) -> Result<f64> {
    let v_next = if t.done {
        0.0
    } else {
        policy::state_value_old(&t.next_state, params)?
    };
    Ok(t.reward + gamma * v_next)
}

/// Mean probability-ratio-weighted advantage without clipping.
pub fn unclipped_objective(batch: &[Transition], params: &PolicyParams, cfg: &PpoConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let shape = params.shape();
    let mut sum = 0.0;
    for t in batch {
        t.validate(params)?;
        let fwd = forward(&shape, params.theta(), &t.state);
        let logp = policy::log_prob(&fwd.logits, &t.mask, t.action)?;
        sum += (logp - t.logp_old).exp() * advantage(t, params, cfg.gamma)?;
    }
    Ok(sum / batch.len() as f64)
}

/// Clipped PPO surrogate averaged over `batch`. The trainer ascends it.
pub fn ppo_objective(batch: &[Transition], params: &PolicyParams, cfg: &PpoConfig) -> Result<Objective> {
    surrogate(batch, params, cfg, None)
}

/// Clipped surrogate plus `λ·F(s,a)·log π_θ(a|s)`.
///
/// The score-weighted log-likelihood lets the external feedback score
/// steer the gradient; a bare `λ·F` would be constant in θ. With `λ = 0`
/// this is exactly [`ppo_objective`].
pub fn feedback_objective(batch: &[Transition], params: &PolicyParams, cfg: &PpoConfig) -> Result<Objective> {
    if cfg.lambda == 0.0 {
        return surrogate(batch, params, cfg, None);
    }
    if let Some(i) = batch.iter().position(|t| t.feedback.is_none()) {
        return Err(Error::domain(format!(
            "transition {i} has no feedback score but lambda = {}",
            cfg.lambda
        )));
    }
    surrogate(batch, params, cfg, Some(cfg.lambda))
}

fn surrogate(
    batch: &[Transition],
    params: &PolicyParams,
    cfg: &PpoConfig,
    lambda: Option<f64>,
) -> Result<Objective> {
    if batch.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let shape = params.shape();
    let theta = params.theta();
    let mut grad = vec![0.0; shape.param_count()];
    let mut sum = 0.0;
    for t in batch {
        t.validate(params)?;
        let adv = advantage(t, params, cfg.gamma)?;
        let fwd = forward(&shape, theta, &t.state);
        let logp = policy::log_prob(&fwd.logits, &t.mask, t.action)?;
        let ratio = (logp - t.logp_old).exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;

        // d(ρA)/dθ = ρA ∇log π; the clipped branch is constant in θ.
        let mut weight = if unclipped <= clipped { unclipped } else { 0.0 };
        sum += unclipped.min(clipped);
        if let Some(lambda) = lambda {
            let f = t.feedback.unwrap_or(0.0);
            sum += lambda * f * logp;
            weight += lambda * f;
        }
        if weight != 0.0 {
            let coef = log_prob_grad_coef(&fwd.logits, &t.mask, t.action, weight);
            backprop(&shape, theta, &t.state, &fwd, Some(&coef), 0.0, &mut grad);
        }
    }
    let n = batch.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    Ok(Objective {
        value: sum / n,
        grad,
    })
}

/// `weight · ∂log π(a|s)/∂logits = weight · (1[j=a] − p_j)` on active actions.
fn log_prob_grad_coef(logits: &[f64], mask: &[bool], action: usize, weight: f64) -> Vec<f64> {
    let probs = linalg::softmax(&policy::masked_logits(logits, mask));
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            if !mask[j] {
                0.0
            } else if j == action {
                weight * (1.0 - p)
            } else {
                -weight * p
            }
        })
        .collect()
}

/// Mean squared error of V_θ(s) against the one-step target.
pub fn value_loss(batch: &[Transition], params: &PolicyParams, gamma: f64) -> Result<Objective> {
    if batch.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let shape = params.shape();
    let theta = params.theta();
    let mut grad = vec![0.0; shape.param_count()];
    let mut sum = 0.0;
    for t in batch {
        t.validate(params)?;
        let target = value_target(t, params, gamma)?;
        let fwd = forward(&shape, theta, &t.state);
        let err = fwd.value - target;
        sum += err * err;
        backprop(&shape, theta, &t.state, &fwd, None, 2.0 * err, &mut grad);
    }
    let n = batch.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    Ok(Objective {
        value: sum / n,
        grad,
    })
}

pub const CROSS_ENTROPY_FLOOR: f64 = 1e-12;

/// `−Σ yᵢ log ŷᵢ` with predictions floored at 1e-12.
pub fn cross_entropy(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::domain(format!(
            "prediction length {} differs from target length {}",
            predicted.len(),
            target.len()
        )));
    }
    let sum: f64 = predicted
        .iter()
        .zip(target)
        .map(|(&p, &y)| y * p.max(CROSS_ENTROPY_FLOOR).ln())
        .sum();
    Ok(0.0 - sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rlcore::policy::NetShape;

    fn zero_value_params() -> PolicyParams {
        // Value head zero, so A = r.
        let shape = NetShape::new(2, 3, 3);
        let mut p = PolicyParams::seeded(shape, 1);
        for w in &mut p.theta_mut()[shape.wv()..] {
            *w = 0.0;
        }
        p.sync_old();
        p
    }

    fn transition(params: &PolicyParams, action: usize, reward: f64) -> Transition {
        let mut t = Transition {
            state: vec![0.5, -0.25],
            action,
            reward,
            next_state: vec![0.1, 0.2],
            done: false,
            logp_old: 0.0,
            feedback: None,
            mask: vec![true; 3],
        };
        t.relabel_logp_old(params).unwrap();
        t
    }

    #[test]
    fn surrogate_hand_cases() {
        assert!((clipped_surrogate(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
        assert_eq!(clipped_surrogate(1.0, 0.37, 0.2), 0.37);
    }

    #[test]
    fn objective_with_planted_ratio() {
        let params = zero_value_params();
        let mut t = transition(&params, 1, 1.0);
        t.logp_old -= 1.5f64.ln();
        let obj = ppo_objective(&[t.clone()], &params, &PpoConfig::default()).unwrap();
        assert!((obj.value - 1.2).abs() < 1e-12);
        assert!(obj.grad.iter().all(|&g| g == 0.0));

        let mut t = transition(&params, 2, -1.0);
        t.logp_old -= 0.5f64.ln();
        let obj = ppo_objective(&[t], &params, &PpoConfig::default()).unwrap();
        assert!((obj.value + 0.8).abs() < 1e-12);
    }

    #[test]
    fn identity_ratio_gives_mean_advantage() {
        let params = PolicyParams::seeded(NetShape::new(2, 3, 3), 4);
        let cfg = PpoConfig::default();
        let batch: Vec<_> = (0..3).map(|a| transition(&params, a, a as f64 * 0.3 - 0.2)).collect();
        let obj = ppo_objective(&batch, &params, &cfg).unwrap();
        let mean_adv: f64 = batch
            .iter()
            .map(|t| advantage(t, &params, cfg.gamma).unwrap())
            .sum::<f64>()
            / 3.0;
        assert!((obj.value - mean_adv).abs() < 1e-12);
        assert_eq!(obj.value, unclipped_objective(&batch, &params, &cfg).unwrap());
    }

    #[test]
    fn feedback_hand_case() {
        // logits [0, ln(e − 1)] make log π(0) = −1 exactly; zero value head gives A = r = 1.
        let shape = NetShape::new(1, 1, 2);
        let mut theta = vec![0.0; shape.param_count()];
        theta[shape.b2() + 1] = (std::f64::consts::E - 1.0).ln();
        let params = PolicyParams::from_theta(shape, theta).unwrap();
        let t = Transition {
            state: vec![0.3],
            action: 0,
            reward: 1.0,
            next_state: vec![0.3],
            done: true,
            logp_old: -1.0 - 1.5f64.ln(),
            feedback: Some(0.4),
            mask: vec![true; 2],
        };
        let cfg = PpoConfig {
            lambda: 0.5,
            ..Default::default()
        };
        let obj = feedback_objective(&[t], &params, &cfg).unwrap();
        assert!((obj.value - 1.0).abs() < 1e-12, "{}", obj.value);
    }

    #[test]
    fn feedback_requires_scores() {
        let params = zero_value_params();
        let t = transition(&params, 0, 1.0);
        let cfg = PpoConfig::default();
        assert!(matches!(feedback_objective(&[t.clone()], &params, &cfg), Err(Error::Domain(_))));
        let cfg0 = PpoConfig { lambda: 0.0, ..cfg };
        assert!(feedback_objective(&[t], &params, &cfg0).is_ok());
        assert!(ppo_objective(&[], &params, &cfg).is_err());
    }

    #[test]
    fn zero_feedback_matches_ppo() {
        let params = PolicyParams::seeded(NetShape::new(2, 3, 3), 8);
        let mut params2 = params.clone();
        params2.theta_mut()[0] += 0.3;
        let batch: Vec<_> = (0..3)
            .map(|a| Transition {
                feedback: Some(0.0),
                ..transition(&params, a, 0.5 - a as f64 * 0.4)
            })
            .collect();
        let cfg = PpoConfig::default();
        let a = ppo_objective(&batch, &params2, &cfg).unwrap();
        let b = feedback_objective(&batch, &params2, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn advantage_hand_cases() {
        let shape = NetShape::new(1, 1, 2);
        // hidden = relu(s); V = hidden, so V(s) = s for s >= 0.
        let mut theta = vec![0.0; shape.param_count()];
        theta[shape.w1()] = 1.0;
        theta[shape.wv()] = 1.0;
        let params = PolicyParams::from_theta(shape, theta).unwrap();
        let t = Transition {
            state: vec![0.5],
            action: 0,
            reward: 1.0,
            next_state: vec![0.2],
            done: false,
            logp_old: 0.0,
            feedback: None,
            mask: vec![true; 2],
        };
        assert!((advantage(&t, &params, 0.9).unwrap() - 0.68).abs() < 1e-12);
        assert!((advantage(&t, &params, 0.0).unwrap() - 0.5).abs() < 1e-12);
        let zero = Transition {
            reward: 0.0,
            ..t.clone()
        };
        let zp = PolicyParams::zeros(shape);
        assert_eq!(advantage(&zero, &zp, 0.99).unwrap(), 0.0);
    }

    #[test]
    fn cross_entropy_cases() {
        assert_eq!(cross_entropy(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
        let ce = cross_entropy(&[0.25; 4], &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-15);
        assert!((ce - 1.386294).abs() < 1e-6);
        let a = cross_entropy(&[0.1, 0.6, 0.3], &[0.2, 0.5, 0.3]).unwrap();
        let b = cross_entropy(&[0.3, 0.1, 0.6], &[0.3, 0.2, 0.5]).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(cross_entropy(&[0.0, 1.0], &[1.0, 0.0]).unwrap().is_finite());
        assert!(cross_entropy(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { clip_eps: 1.0, ..Default::default() }.validate().is_err());
        assert!(PpoConfig { lambda: -0.1, ..Default::default() }.validate().is_err());
        assert!(PpoConfig { gamma: 1.1, ..Default::default() }.validate().is_err());
    }
}
