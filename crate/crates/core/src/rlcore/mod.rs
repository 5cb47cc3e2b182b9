//! PPO over prompt indices.
//!
//! The policy is a one-hidden-layer ReLU network whose trunk is shared by
//! the action logits and the state-value head. Retired prompts are masked
//! to `-inf` rather than removed, so θ keeps one shape for the whole run.
//! All gradients are analytic and checked against finite differences in
//! the test suite.

mod checkpoint;
mod objective;
mod optimizer;
mod policy;
mod trainer;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use objective::{
    advantage, clipped_surrogate, cross_entropy, feedback_objective, ppo_objective, unclipped_objective,
    value_loss, value_target, Objective, PpoConfig, Transition, CROSS_ENTROPY_FLOOR,
};
pub use optimizer::{optimizer_step, OptimizerConfig, OptimizerState};
pub use policy::{
    policy_forward, policy_forward_old, sample_action, state_value, state_value_old, ActionDist, NetShape,
    PolicyParams,
};
pub use trainer::{mean_feedback, ObjectiveKind, PpoTrainer, StepStats, UpdateStats};

/// Hidden width of the policy trunk.
pub const DEFAULT_HIDDEN: usize = 64;

/// `log π_θ(a|s)` under `mask`, from the current parameters.
pub fn log_prob(s: &[f64], params: &PolicyParams, mask: &[bool], action: usize) -> crate::Result<f64> {
    let shape = params.shape();
    policy::check_obs(&shape, s)?;
    policy::check_mask(&shape, mask)?;
    let fwd = policy::forward(&shape, params.theta(), s);
    policy::log_prob(&fwd.logits, mask, action)
}
