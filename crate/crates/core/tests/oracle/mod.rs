//! Independent reference implementations used by the integration tests
//! and the acceptance harness. Nothing here calls into the code under
//! test except to build inputs.
#![allow(dead_code)]

use rand::Rng;
use rlvlm::rlcore::{NetShape, PolicyParams, PpoConfig, Transition};

/// Plain-loop forward pass over the flat layout
/// `[w1 (h×d), b1 (h), w2 (a×h), b2 (a), wv (h), bv]`.
pub struct NetOut {
    pub pre: Vec<f64>,
    pub logits: Vec<f64>,
    pub value: f64,
}

pub fn net(shape: NetShape, theta: &[f64], s: &[f64]) -> NetOut {
    let (d, h, a) = (shape.obs_dim, shape.hidden, shape.actions);
    let w1 = 0;
    let b1 = w1 + h * d;
    let w2 = b1 + h;
    let b2 = w2 + a * h;
    let wv = b2 + a;
    let bv = wv + h;
    let mut pre = vec![0.0; h];
    for k in 0..h {
        let mut z = theta[b1 + k];
        for i in 0..d {
            z += theta[w1 + k * d + i] * s[i];
        }
        pre[k] = z;
    }
    let hid: Vec<f64> = pre.iter().map(|&z| if z > 0.0 { z } else { 0.0 }).collect();
    let mut logits = vec![0.0; a];
    for j in 0..a {
        let mut z = theta[b2 + j];
        for k in 0..h {
            z += theta[w2 + j * h + k] * hid[k];
        }
        logits[j] = z;
    }
    let mut value = theta[bv];
    for k in 0..h {
        value += theta[wv + k] * hid[k];
    }
    NetOut { pre, logits, value }
}

pub fn log_softmax_at(logits: &[f64], mask: &[bool], action: usize) -> f64 {
    let m = logits
        .iter()
        .zip(mask)
        .filter(|(_, &on)| on)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits
        .iter()
        .zip(mask)
        .filter(|(_, &on)| on)
        .map(|(&l, _)| (l - m).exp())
        .sum();
    logits[action] - m - z.ln()
}

fn adv(t: &Transition, shape: NetShape, theta_old: &[f64], gamma: f64) -> f64 {
    let v_s = net(shape, theta_old, &t.state).value;
    let v_n = if t.done { 0.0 } else { net(shape, theta_old, &t.next_state).value };
    t.reward + gamma * v_n - v_s
}

/// Clipped surrogate plus optional `λ·F·log π`, averaged over the batch.
pub fn surrogate(batch: &[Transition], shape: NetShape, theta: &[f64], theta_old: &[f64], cfg: &PpoConfig, lambda: f64) -> f64 {
    let mut total = 0.0;
    for t in batch {
        let a = adv(t, shape, theta_old, cfg.gamma);
        let logp = log_softmax_at(&net(shape, theta, &t.state).logits, &t.mask, t.action);
        let r = (logp - t.logp_old).exp();
        let lo = 1.0 - cfg.clip_eps;
        let hi = 1.0 + cfg.clip_eps;
        let rc = if r < lo { lo } else if r > hi { hi } else { r };
        total += (r * a).min(rc * a) + lambda * t.feedback.unwrap_or(0.0) * logp;
    }
    total / batch.len() as f64
}

pub fn value_mse(batch: &[Transition], shape: NetShape, theta: &[f64], theta_old: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    for t in batch {
        let v_n = if t.done { 0.0 } else { net(shape, theta_old, &t.next_state).value };
        let e = net(shape, theta, &t.state).value - (t.reward + gamma * v_n);
        total += e * e;
    }
    total / batch.len() as f64
}

/// Central differences of `f` around `theta` with step `h`.
pub fn central_diff(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

/// A random small network, batch and config for gradient checks.
pub struct GradCase {
    pub params: PolicyParams,
    pub batch: Vec<Transition>,
    pub cfg: PpoConfig,
}

/// Draws a case whose finite differences are well defined: no ReLU
/// pre-activation and no probability ratio within `margin` of a kink.
pub fn grad_case<R: Rng>(rng: &mut R, margin: f64) -> GradCase {
    loop {
        let shape = NetShape::new(rng.gen_range(2..=5), rng.gen_range(3..=7), rng.gen_range(2..=5));
        let n = shape.param_count();
        let theta_old: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let theta: Vec<f64> = theta_old.iter().map(|w| w + rng.gen_range(-0.25..0.25)).collect();
        let mut params = PolicyParams::from_theta(shape, theta_old.clone()).unwrap();
        params.theta_mut().copy_from_slice(&theta);
        let cfg = PpoConfig {
            clip_eps: rng.gen_range(0.1..0.3),
            lambda: rng.gen_range(0.0..1.0),
            gamma: rng.gen_range(0.8..0.999),
            ..PpoConfig::default()
        };
        let len = rng.gen_range(1..=6);
        let mut batch = Vec::with_capacity(len);
        let mut smooth = true;
        for _ in 0..len {
            let state: Vec<f64> = (0..shape.obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let next_state: Vec<f64> = (0..shape.obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut mask: Vec<bool> = (0..shape.actions).map(|_| rng.gen_bool(0.75)).collect();
            let action = rng.gen_range(0..shape.actions);
            mask[action] = true;
            let old = net(shape, &theta_old, &state);
            let logp_old = log_softmax_at(&old.logits, &mask, action);
            let cur = net(shape, &theta, &state);
            let logp = log_softmax_at(&cur.logits, &mask, action);
            let ratio = (logp - logp_old).exp();
            if cur.pre.iter().any(|z| z.abs() < margin)
                || (ratio - (1.0 - cfg.clip_eps)).abs() < margin
                || (ratio - (1.0 + cfg.clip_eps)).abs() < margin
            {
                smooth = false;
                break;
            }
            batch.push(Transition {
                state,
                action,
                reward: rng.gen_range(-1.0..1.0),
                next_state,
                done: rng.gen_bool(0.3),
                logp_old,
                feedback: Some(rng.gen_range(-1.0..1.0)),
                mask,
            });
        }
        if smooth {
            return GradCase { params, batch, cfg };
        }
    }
}

/// Exhaustive inner-product argmax; the first maximum wins.
pub fn brute_mips(q: &[f64], docs: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, d) in docs.iter().enumerate() {
        let mut s = 0.0;
        for (x, y) in q.iter().zip(d) {
            s += x * y;
        }
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

/// Scripted moment recurrence without bias correction.
pub struct Recurrence {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Recurrence {
    pub fn new(n: usize, alpha: f64) -> Self {
        Self {
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, theta: &mut [f64], g: &[f64]) {
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            theta[i] -= self.alpha * self.m[i] / (self.v[i].sqrt() + self.eps);
        }
    }
}

/// Deterministic gradient sequence for recurrence tests.
pub fn scripted_grad(step: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| ((step * 7 + i * 13) as f64 * 0.37).sin() * (1.0 + i as f64 * 0.5))
        .collect()
}

/// Nearest-neighbor re-identification success rate in percent.
pub fn brute_srra(probes: &[Vec<f64>], gallery: &[(String, Vec<f64>)], truth: &[String]) -> f64 {
    let docs: Vec<Vec<f64>> = gallery.iter().map(|(_, e)| e.clone()).collect();
    let hits = probes
        .iter()
        .zip(truth)
        .filter(|(p, t)| gallery[brute_mips(p, &docs).0].0 == **t)
        .count();
    100.0 * hits as f64 / probes.len() as f64
}

pub fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Index of the largest value, first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of sampled selections that hit the reward-maximizing prompt,
/// found by trying every action, over `n` fresh states.
pub fn optimal_selection_rate(
    env: &rlvlm::pipeline::SyntheticPromptEnv,
    params: &rlvlm::rlcore::PolicyParams,
    n: usize,
    seed: u64,
) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mask = vec![true; env.actions];
    let mut hits = 0;
    for _ in 0..n {
        let s = env.sample_state(&mut rng);
        let rewards: Vec<f64> = (0..env.actions).map(|a| env.reward(&s, a)).collect();
        let dist = rlvlm::rlcore::policy_forward(&s, params, &mask).unwrap();
        if rlvlm::rlcore::sample_action(&dist, &mut rng) == argmax(&rewards) {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}
