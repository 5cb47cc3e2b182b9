use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, log_sum_exp};

/// Sizes of the shared-trunk policy/value network:
/// `obs → hidden (ReLU) → logits` plus `hidden → V(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub obs_dim: usize,
    pub hidden: usize,
    pub actions: usize,
}

impl NetShape {
    pub fn new(obs_dim: usize, hidden: usize, actions: usize) -> Self {
        Self {
            obs_dim,
            hidden,
            actions,
        }
    }

    // Flat layout: w1 (hidden × obs), b1, w2 (actions × hidden), b2, wv (hidden), bv.
    pub(crate) fn w1(&self) -> usize {
        0
    }
    pub(crate) fn b1(&self) -> usize {
        self.hidden * self.obs_dim
    }
    pub(crate) fn w2(&self) -> usize {
        self.b1() + self.hidden
    }
    pub(crate) fn b2(&self) -> usize {
        self.w2() + self.actions * self.hidden
    }
    pub(crate) fn wv(&self) -> usize {
        self.b2() + self.actions
    }
    pub(crate) fn bv(&self) -> usize {
        self.wv() + self.hidden
    }

    pub fn param_count(&self) -> usize {
        self.bv() + 1
    }
}

/// Learnable parameters θ and the frozen snapshot θ_old.
///
/// `theta_old` only changes through [`PolicyParams::sync_old`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    shape: NetShape,
    theta: Vec<f64>,
    theta_old: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(shape: NetShape) -> Self {
        let theta = vec![0.0; shape.param_count()];
        Self {
            shape,
            theta_old: theta.clone(),
            theta,
        }
    }

    /// Uniform fan-in initialization; the logit layer is scaled down so the
    /// initial policy is close to uniform.
    pub fn seeded(shape: NetShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; shape.param_count()];
        let b_in = 1.0 / (shape.obs_dim as f64).sqrt();
        let b_hidden = 1.0 / (shape.hidden as f64).sqrt();
        for w in &mut theta[shape.w1()..shape.b1()] {
            *w = rng.gen_range(-b_in..=b_in);
        }
        for w in &mut theta[shape.w2()..shape.b2()] {
            *w = 0.01 * rng.gen_range(-b_hidden..=b_hidden);
        }
        for w in &mut theta[shape.wv()..shape.bv()] {
            *w = rng.gen_range(-b_hidden..=b_hidden);
        }
        Self {
            shape,
            theta_old: theta.clone(),
            theta,
        }
    }

    pub fn from_theta(shape: NetShape, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != shape.param_count() {
            return Err(Error::domain(format!(
                "expected {} parameters, got {}",
                shape.param_count(),
                theta.len()
            )));
        }
        Ok(Self {
            shape,
            theta_old: theta.clone(),
            theta,
        })
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn theta_old(&self) -> &[f64] {
        &self.theta_old
    }

    /// `θ_old ← θ`
    pub fn sync_old(&mut self) {
        self.theta_old.clone_from(&self.theta);
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(&self.theta_old).all(|v| v.is_finite())
    }
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub value: f64,
}

pub(crate) fn check_obs(shape: &NetShape, s: &[f64]) -> Result<()> {
    if s.len() != shape.obs_dim {
        return Err(Error::domain(format!(
            "observation dimension {} does not match network input {}",
            s.len(),
            shape.obs_dim
        )));
    }
    Ok(())
}

pub(crate) fn check_mask(shape: &NetShape, mask: &[bool]) -> Result<()> {
    if mask.len() != shape.actions {
        return Err(Error::domain(format!(
            "action mask length {} does not match action space {}",
            mask.len(),
            shape.actions
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::domain("action mask has no active actions"));
    }
    Ok(())
}

pub(crate) fn forward(shape: &NetShape, theta: &[f64], s: &[f64]) -> Forward {
    let (d, h, a) = (shape.obs_dim, shape.hidden, shape.actions);
    let w1 = &theta[shape.w1()..shape.b1()];
    let b1 = &theta[shape.b1()..shape.w2()];
    let pre: Vec<f64> = (0..h)
        .map(|k| linalg::dot(&w1[k * d..(k + 1) * d], s) + b1[k])
        .collect();
    let hidden: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
    let w2 = &theta[shape.w2()..shape.b2()];
    let b2 = &theta[shape.b2()..shape.wv()];
    let logits = (0..a)
        .map(|j| linalg::dot(&w2[j * h..(j + 1) * h], &hidden) + b2[j])
        .collect();
    let value = linalg::dot(&theta[shape.wv()..shape.bv()], &hidden) + theta[shape.bv()];
    Forward {
        pre,
        hidden,
        logits,
        value,
    }
}

pub(crate) fn masked_logits(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { l } else { f64::NEG_INFINITY })
        .collect()
}

/// `log π(a|s)` from raw logits under `mask`.
pub(crate) fn log_prob(logits: &[f64], mask: &[bool], action: usize) -> Result<f64> {
    if action >= mask.len() || !mask[action] {
        return Err(Error::domain(format!("action {action} is not active")));
    }
    let masked = masked_logits(logits, mask);
    Ok(masked[action] - log_sum_exp(&masked))
}

/// Back-propagates `∂/∂logits = coef_logits` and `∂/∂V = coef_value`
/// through the network, adding into `grad`.
pub(crate) fn backprop(
    shape: &NetShape,
    theta: &[f64],
    s: &[f64],
    fwd: &Forward,
    coef_logits: Option<&[f64]>,
    coef_value: f64,
    grad: &mut [f64],
) {
    let (d, h, a) = (shape.obs_dim, shape.hidden, shape.actions);
    let mut d_hidden = vec![0.0; h];
    if let Some(coef) = coef_logits {
        let w2 = &theta[shape.w2()..shape.b2()];
        for j in 0..a {
            let c = coef[j];
            if c == 0.0 {
                continue;
            }
            let row = shape.w2() + j * h;
            for k in 0..h {
                grad[row + k] += c * fwd.hidden[k];
                d_hidden[k] += c * w2[j * h + k];
            }
            grad[shape.b2() + j] += c;
        }
    }
    if coef_value != 0.0 {
        let wv = &theta[shape.wv()..shape.bv()];
        for k in 0..h {
            grad[shape.wv() + k] += coef_value * fwd.hidden[k];
            d_hidden[k] += coef_value * wv[k];
        }
        grad[shape.bv()] += coef_value;
    }
    for k in 0..h {
        if fwd.pre[k] <= 0.0 || d_hidden[k] == 0.0 {
            continue;
        }
        let dz = d_hidden[k];
        let row = shape.w1() + k * d;
        for (g, &x) in grad[row..row + d].iter_mut().zip(s) {
            *g += dz * x;
        }
        grad[shape.b1() + k] += dz;
    }
}

/// A probability vector over the full action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDist {
    probs: Vec<f64>,
}

impl ActionDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::domain("empty action distribution"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::domain("action probabilities must be finite and non-negative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("action probabilities sum to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest probability (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// π_θ(·|s) restricted to the active actions in `mask`.
pub fn policy_forward(s: &[f64], params: &PolicyParams, mask: &[bool]) -> Result<ActionDist> {
    dist_for(params.shape(), params.theta(), s, mask)
}

/// π_θold(·|s) restricted to `mask`.
pub fn policy_forward_old(s: &[f64], params: &PolicyParams, mask: &[bool]) -> Result<ActionDist> {
    dist_for(params.shape(), params.theta_old(), s, mask)
}

fn dist_for(shape: NetShape, theta: &[f64], s: &[f64], mask: &[bool]) -> Result<ActionDist> {
    check_obs(&shape, s)?;
    check_mask(&shape, mask)?;
    let fwd = forward(&shape, theta, s);
    Ok(ActionDist {
        probs: linalg::softmax(&masked_logits(&fwd.logits, mask)),
    })
}

/// V_θ(s) from the current parameters.
pub fn state_value(s: &[f64], params: &PolicyParams) -> Result<f64> {
    check_obs(&params.shape(), s)?;
    Ok(forward(&params.shape(), params.theta(), s).value)
}

/// V_θold(s), the baseline used for advantages.
pub fn state_value_old(s: &[f64], params: &PolicyParams) -> Result<f64> {
    check_obs(&params.shape(), s)?;
    Ok(forward(&params.shape(), params.theta_old(), s).value)
}

/// Draws an action index by inverse-CDF sampling.
pub fn sample_action<R: Rng + ?Sized>(dist: &ActionDist, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last_positive = i;
        cum += p;
        if u < cum {
            return i;
        }
    }
    last_positive
}
