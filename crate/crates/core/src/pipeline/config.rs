use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{EmbedClient, Gateway, ModelEndpoint};
use crate::prompts::{default_retention, DEFAULT_RETENTION_FLOOR};
use crate::rlcore::{ObjectiveKind, OptimizerConfig, PpoConfig, DEFAULT_HIDDEN};
use crate::textenc::EncoderConfig;

pub const DEFAULT_ITERATIONS: usize = 3;
pub const DEFAULT_FEEDBACK_MARGIN: f64 = 0.05;
pub const DEFAULT_BASE_PROMPT: &str = "Describe the traffic scene in the image.";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunPaths {
    pub prompts: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub caption: ModelEndpoint,
    pub embed: ModelEndpoint,
    pub dim: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            caption: ModelEndpoint::mock(0),
            embed: ModelEndpoint::mock(42),
            dim: EncoderConfig::default().d_model,
        }
    }
}

impl GatewayConfig {
    pub fn build(&self) -> Result<Gateway> {
        Gateway::new(self.caption.clone(), EmbedClient::new(self.embed.clone(), self.dim)?)
    }
}

/// Everything that determines a run. Serialized into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Prompts kept per refinement; `None` keeps half, rounded up. Never
    /// below `retention_floor` unless the list is already smaller.
    pub retention_k: Option<usize>,
    pub retention_floor: usize,
    /// Margin δ by which retrieval feedback must beat the internal reward
    /// to queue a feedback update.
    pub feedback_margin: f64,
    pub base_prompt: String,
    pub hidden: usize,
    pub objective: ObjectiveKind,
    pub ppo: PpoConfig,
    pub optimizer: OptimizerConfig,
    pub episodes_per_update: usize,
    pub train_updates: u64,
    pub gateway: GatewayConfig,
    pub paths: RunPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
            retention_k: None,
            retention_floor: DEFAULT_RETENTION_FLOOR,
            feedback_margin: DEFAULT_FEEDBACK_MARGIN,
            base_prompt: DEFAULT_BASE_PROMPT.to_owned(),
            hidden: DEFAULT_HIDDEN,
            objective: ObjectiveKind::Feedback,
            ppo: PpoConfig::default(),
            optimizer: OptimizerConfig::default(),
            episodes_per_update: 8,
            train_updates: 500,
            gateway: GatewayConfig::default(),
            paths: RunPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::domain("iteration budget must be at least 1"));
        }
        if self.retention_k == Some(0) || self.retention_floor == 0 {
            return Err(Error::domain("retention count must be at least 1"));
        }
        if !(self.feedback_margin.is_finite()) {
            return Err(Error::domain("feedback margin must be finite"));
        }
        if self.base_prompt.trim().is_empty() {
            return Err(Error::domain("base prompt is empty"));
        }
        if self.hidden == 0 || self.episodes_per_update == 0 {
            return Err(Error::domain("hidden width and episodes per update must be positive"));
        }
        self.ppo.validate()
    }

    /// Prompts to keep when refining a list of `current` prompts.
    pub fn retention(&self, current: usize) -> usize {
        match self.retention_k {
            Some(k) => k.max(self.retention_floor).min(current),
            None => default_retention(current, self.retention_floor),
        }
    }

    /// Whether retrieval feedback can queue policy updates at all.
    pub fn feedback_enabled(&self) -> bool {
        self.objective == ObjectiveKind::Feedback && self.ppo.lambda > 0.0
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
