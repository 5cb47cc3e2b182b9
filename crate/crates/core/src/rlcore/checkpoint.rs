use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::objective::PpoConfig;
use super::optimizer::OptimizerState;
use super::policy::PolicyParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training. Floats are written with
/// round-trip precision, so save/load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub ppo: PpoConfig,
    pub params: PolicyParams,
    pub optimizer: OptimizerState,
}

impl Checkpoint {
    pub fn new(params: PolicyParams, optimizer: OptimizerState, ppo: PpoConfig, seed: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed,
            ppo,
            params,
            optimizer,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(s)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        if ckpt.params.theta().len() != ckpt.params.shape().param_count()
            || ckpt.params.theta_old().len() != ckpt.params.shape().param_count()
            || ckpt.optimizer.m.len() != ckpt.params.shape().param_count()
            || ckpt.optimizer.v.len() != ckpt.params.shape().param_count()
        {
            return Err(Error::Checkpoint("parameter vectors do not match the network shape".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rlcore::{NetShape, OptimizerConfig};

    #[test]
    fn round_trip_is_bit_exact() {
        let params = PolicyParams::seeded(NetShape::new(5, 7, 4), 99);
        let mut opt = OptimizerState::new(OptimizerConfig::default(), params.shape().param_count());
        let mut p2 = params.clone();
        let grad: Vec<f64> = (0..opt.m.len()).map(|i| (i as f64).sin() / 3.0).collect();
        opt.apply(p2.theta_mut(), &grad).unwrap();
        let ckpt = Checkpoint::new(p2, opt, PpoConfig::default(), 17);
        let back = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
        assert_eq!(back, ckpt);
        for (a, b) in back.params.theta().iter().zip(ckpt.params.theta()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn wrong_version_rejected() {
        let params = PolicyParams::zeros(NetShape::new(1, 1, 1));
        let opt = OptimizerState::new(OptimizerConfig::default(), params.shape().param_count());
        let mut ckpt = Checkpoint::new(params, opt, PpoConfig::default(), 0);
        ckpt.version = 99;
        let json = serde_json::to_string(&ckpt).unwrap();
        assert!(matches!(Checkpoint::from_json(&json), Err(Error::Checkpoint(_))));
    }
}
