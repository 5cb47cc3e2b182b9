use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::run::{image_seed, run_episode, PipelineContext};
use crate::error::{Error, Result};
use crate::gateway::image_digest;
use crate::rlcore::{policy_forward, sample_action, PolicyParams, PpoTrainer, Transition};

/// Anything that can play episodes with a policy snapshot.
pub trait EpisodeSource {
    /// Plays episode number `episode` with `policy` and returns its
    /// transitions. `logp_old` is relabeled by the trainer afterwards.
    fn collect(&mut self, policy: &PolicyParams, episode: usize) -> Result<Vec<Transition>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub update: usize,
    pub transitions: usize,
    pub objective: f64,
    pub value_loss: f64,
    pub mean_reward: f64,
    pub mean_feedback: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trainer: PpoTrainer,
    pub log: Vec<TrainLogEntry>,
}

/// Runs `updates` PPO updates, each on `episodes_per_update` fresh
/// episodes collected from the current policy. Episodes are collected
/// against a frozen snapshot; only this loop writes θ.
pub fn train_with<S: EpisodeSource + ?Sized>(
    source: &mut S,
    mut trainer: PpoTrainer,
    episodes_per_update: usize,
    updates: usize,
) -> Result<TrainOutcome> {
    if episodes_per_update == 0 {
        return Err(Error::domain("episodes per update must be positive"));
    }
    let mut log = Vec::with_capacity(updates);
    let mut episode = 0;
    for update in 0..updates {
        let snapshot = trainer.params().clone();
        let mut batch = Vec::new();
        for _ in 0..episodes_per_update {
            batch.extend(source.collect(&snapshot, episode)?);
            episode += 1;
        }
        for t in &mut batch {
            t.relabel_logp_old(&snapshot)?;
        }
        let stats = trainer.update(&batch)?;
        let n = stats.steps.len().max(1) as f64;
        log.push(TrainLogEntry {
            update: update + 1,
            transitions: batch.len(),
            objective: stats.steps.iter().map(|s| s.objective).sum::<f64>() / n,
            value_loss: stats.steps.iter().map(|s| s.value_loss).sum::<f64>() / n,
            mean_reward: stats.mean_reward,
            mean_feedback: stats.mean_feedback,
        });
    }
    Ok(TrainOutcome { trainer, log })
}

/// Episodes from the full pipeline, cycling through a list of images.
pub struct ImageEpisodes<'a> {
    images: &'a [(String, Vec<u8>)],
    ctx: PipelineContext<'a>,
}

impl<'a> ImageEpisodes<'a> {
    pub fn new(images: &'a [(String, Vec<u8>)], ctx: PipelineContext<'a>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::domain("empty training set"));
        }
        Ok(Self { images, ctx })
    }
}

impl EpisodeSource for ImageEpisodes<'_> {
    fn collect(&mut self, policy: &PolicyParams, episode: usize) -> Result<Vec<Transition>> {
        let (name, bytes) = &self.images[episode % self.images.len()];
        let seed = image_seed(self.ctx.config.seed ^ episode as u64, &image_digest(bytes));
        run_episode(name, bytes, policy, &self.ctx, seed)
            .map(|ep| ep.transitions)
            .map_err(|p| p.error)
    }
}

/// Trains the prompt policy on pipeline episodes over `images`, running
/// `config.train_updates` updates of `config.episodes_per_update`
/// episodes each. Pass a resumed trainer to continue from a checkpoint.
pub fn train(images: &[(String, Vec<u8>)], trainer: PpoTrainer, ctx: PipelineContext<'_>) -> Result<TrainOutcome> {
    let cfg = ctx.config;
    if trainer.params().shape() != ctx.bank.net_shape(trainer.params().shape().hidden) {
        return Err(Error::domain("policy shape does not match the prompt catalog"));
    }
    let mut source = ImageEpisodes::new(images, ctx)?;
    train_with(&mut source, trainer, cfg.episodes_per_update, cfg.train_updates as usize)
}

/// One-step bandit over prompt indices with a single prompt that is best
/// in every state. Feedback equals the reward.
#[derive(Debug, Clone)]
pub struct SyntheticPromptEnv {
    pub obs_dim: usize,
    pub actions: usize,
    pub optimal: usize,
    directions: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl SyntheticPromptEnv {
    pub fn new(obs_dim: usize, actions: usize, optimal: usize, seed: u64) -> Result<Self> {
        if obs_dim == 0 || actions < 2 || optimal >= actions {
            return Err(Error::domain("synthetic environment needs obs_dim ≥ 1, ≥ 2 actions and a valid optimum"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let directions = (0..actions)
            .map(|_| (0..obs_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        Ok(Self {
            obs_dim,
            actions,
            optimal,
            directions,
            rng,
        })
    }

    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.obs_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
    }

    /// 1 for the optimal prompt; at most 0.4 for any other.
    pub fn reward(&self, state: &[f64], action: usize) -> f64 {
        if action == self.optimal {
            return 1.0;
        }
        let z: f64 = state.iter().zip(&self.directions[action]).map(|(s, d)| s * d).sum();
        0.2 + 0.2 * z.tanh()
    }
}

impl EpisodeSource for SyntheticPromptEnv {
    fn collect(&mut self, policy: &PolicyParams, _episode: usize) -> Result<Vec<Transition>> {
        let state = {
            let rng = &mut self.rng;
            (0..self.obs_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect::<Vec<f64>>()
        };
        let mask = vec![true; self.actions];
        let dist = policy_forward(&state, policy, &mask)?;
        let action = sample_action(&dist, &mut self.rng);
        let reward = self.reward(&state, action);
        Ok(vec![Transition {
            next_state: state.clone(),
            state,
            action,
            reward,
            done: true,
            logp_old: dist.probs()[action].ln(),
            feedback: Some(reward),
            mask,
        }])
    }
}
