use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::NetworkConfig;

/// Optimization settings. The number of diffusion steps and the noise
/// schedule live in `network`, since sampling needs them too and they are
/// stored in every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub lambda_vel: f64,
    /// Probability of zeroing the speech condition of a batch item.
    pub cond_dropout_p: f64,
    pub crop_len: usize,
    pub seed: u64,
    /// Checkpoint and loss-log interval in iterations; 0 writes only the
    /// initial and final checkpoints.
    pub checkpoint_every: u64,
    pub network: NetworkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 64,
            iterations: 140_000,
            lambda_vel: 10.0,
            cond_dropout_p: 0.1,
            crop_len: 30,
            seed: 0,
            checkpoint_every: 10_000,
            network: NetworkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return fail("batch size must be positive".into());
        }
        if !(self.lambda_vel >= 0.0 && self.lambda_vel.is_finite()) {
            return fail(format!("lambda_vel must be >= 0, got {}", self.lambda_vel));
        }
        if !(0.0..=1.0).contains(&self.cond_dropout_p) {
            return fail(format!(
                "condition dropout must lie in [0, 1], got {}",
                self.cond_dropout_p
            ));
        }
        if self.crop_len == 0 {
            return fail("crop length must be positive".into());
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!((c.lr, c.batch_size, c.lambda_vel, c.cond_dropout_p, c.crop_len), (1e-4, 64, 10.0, 0.1, 30));
        assert_eq!(c.network.diffusion_steps, 500);
    }

    #[test]
    fn invariants_enforced() {
        for bad in [
            TrainConfig { cond_dropout_p: 1.5, ..Default::default() },
            TrainConfig { cond_dropout_p: -0.1, ..Default::default() },
            TrainConfig { lambda_vel: -1.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"iterations": 5, "network": {"audio_channels_in": 8}}"#).unwrap();
        assert_eq!(c.iterations, 5);
        assert_eq!(c.network.audio_channels_in, 8);
        assert_eq!(c.network.latent_channels, 64);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
