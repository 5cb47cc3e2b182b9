use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{feedback_objective, ppo_objective, value_loss, PpoConfig, Transition};
use super::optimizer::{optimizer_step, OptimizerConfig, OptimizerState};
use super::policy::PolicyParams;
use crate::error::{Error, Result};

/// Which policy objective the trainer ascends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    #[default]
    Feedback,
    PpoOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub objective: f64,
    pub value_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub steps: Vec<StepStats>,
    pub mean_reward: f64,
    pub mean_feedback: Option<f64>,
}

/// Single-writer PPO learner: epochs of shuffled minibatch steps over a
/// collected batch, then `θ_old ← θ`.
#[derive(Debug, Clone)]
pub struct PpoTrainer {
    params: PolicyParams,
    optimizer: OptimizerState,
    cfg: PpoConfig,
    kind: ObjectiveKind,
    rng: ChaCha8Rng,
    steps_taken: u64,
}

impl PpoTrainer {
    pub fn new(
        params: PolicyParams,
        optimizer: OptimizerConfig,
        cfg: PpoConfig,
        kind: ObjectiveKind,
    ) -> Result<Self> {
        cfg.validate()?;
        let optimizer = OptimizerState::new(optimizer, params.shape().param_count());
        Self::resume(params, optimizer, cfg, kind)
    }

    pub fn resume(
        params: PolicyParams,
        optimizer: OptimizerState,
        cfg: PpoConfig,
        kind: ObjectiveKind,
    ) -> Result<Self> {
        cfg.validate()?;
        if optimizer.m.len() != params.shape().param_count() {
            return Err(Error::domain("optimizer state does not match policy shape"));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            steps_taken: optimizer.step,
            params,
            optimizer,
            cfg,
            kind,
        })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn into_parts(self) -> (PolicyParams, OptimizerState) {
        (self.params, self.optimizer)
    }

    /// One optimizer step descending `−objective + c_v · value_loss` on `batch`.
    pub fn step(&mut self, batch: &[Transition]) -> Result<StepStats> {
        let objective = match self.kind {
            ObjectiveKind::Feedback => feedback_objective(batch, &self.params, &self.cfg)?,
            ObjectiveKind::PpoOnly => ppo_objective(batch, &self.params, &self.cfg)?,
        };
        let value = value_loss(batch, &self.params, self.cfg.gamma)?;
        let loss = -objective.value + self.cfg.value_coef * value.value;
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss {loss} (objective {}, value loss {})",
                objective.value, value.value
            )));
        }
        let grad: Vec<f64> = objective
            .grad
            .iter()
            .zip(&value.grad)
            .map(|(g_obj, g_val)| -g_obj + self.cfg.value_coef * g_val)
            .collect();
        optimizer_step(&mut self.params, &grad, &mut self.optimizer)?;
        self.steps_taken += 1;
        Ok(StepStats {
            objective: objective.value,
            value_loss: value.value,
        })
    }

    /// Full PPO update on a collected batch.
    pub fn update(&mut self, batch: &[Transition]) -> Result<UpdateStats> {
        if batch.is_empty() {
            return Err(Error::domain("empty batch"));
        }
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut steps = Vec::new();
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.cfg.minibatch) {
                let minibatch: Vec<Transition> = chunk.iter().map(|&i| batch[i].clone()).collect();
                steps.push(self.step(&minibatch)?);
            }
        }
        self.params.sync_old();
        Ok(UpdateStats {
            steps,
            mean_reward: batch.iter().map(|t| t.reward).sum::<f64>() / batch.len() as f64,
            mean_feedback: mean_feedback(batch),
        })
    }

    /// Single step on a feedback batch followed by a sync.
    pub fn apply_feedback(&mut self, batch: &[Transition]) -> Result<StepStats> {
        let stats = self.step(batch)?;
        self.params.sync_old();
        Ok(stats)
    }
}

pub fn mean_feedback(batch: &[Transition]) -> Option<f64> {
    let scores: Vec<f64> = batch.iter().filter_map(|t| t.feedback).collect();
    if scores.is_empty() {
        None
    } else {
        Some(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}
