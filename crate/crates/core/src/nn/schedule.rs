use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    /// Epochs (0-based) at whose start the learning rate is multiplied by
    /// `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub total_epochs: usize,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    /// Mask network column: LeNet-5, batch 64, lr 1e-3 decayed x0.1 at epochs 10 and 20, 30 epochs.
    pub fn mask_default() -> Self {
        Self {
            batch_size: 64,
            base_lr: 1e-3,
            decay_epochs: vec![10, 20],
            decay_factor: 0.1,
            total_epochs: 30,
            seed: 0,
        }
    }

    /// Bounding-box column: 2-layer MLP, batch 128, lr 1e-2 decayed x0.1 at epochs 15 and 30, 50 epochs.
    pub fn bbox_default() -> Self {
        Self {
            batch_size: 128,
            base_lr: 1e-2,
            decay_epochs: vec![15, 30],
            decay_factor: 0.1,
            total_epochs: 50,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.total_epochs == 0 {
            return Err(Error::Config("batch_size and total_epochs must be positive".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config("base_lr must be positive".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config("decay_factor must lie in (0, 1]".into()));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("decay_epochs must be strictly increasing".into()));
        }
        if self.decay_epochs.iter().any(|&e| e > self.total_epochs) {
            return Err(Error::Config("decay_epochs must not exceed total_epochs".into()));
        }
        Ok(())
    }
}

/// `base_lr * decay_factor ^ |{d in decay_epochs : d <= epoch}|`.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch >= cfg.total_epochs {
        return Err(Error::Domain(format!(
            "epoch {epoch} outside [0, {})",
            cfg.total_epochs
        )));
    }
    let passed = cfg.decay_epochs.iter().filter(|&&d| d <= epoch).count();
    Ok(cfg.base_lr * cfg.decay_factor.powi(passed as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-15 * b.abs()
    }

    #[test]
    fn mask_column() {
        let c = TrainConfig::mask_default();
        assert!(close(lr_at_epoch(&c, 0).unwrap(), 1e-3));
        assert!(close(lr_at_epoch(&c, 9).unwrap(), 1e-3));
        assert!(close(lr_at_epoch(&c, 10).unwrap(), 1e-4));
        assert!(close(lr_at_epoch(&c, 19).unwrap(), 1e-4));
        assert!(close(lr_at_epoch(&c, 20).unwrap(), 1e-5));
        assert!(close(lr_at_epoch(&c, 29).unwrap(), 1e-5));
    }

    #[test]
    fn bbox_column() {
        let c = TrainConfig::bbox_default();
        assert!(close(lr_at_epoch(&c, 14).unwrap(), 1e-2));
        assert!(close(lr_at_epoch(&c, 15).unwrap(), 1e-3));
        assert!(close(lr_at_epoch(&c, 30).unwrap(), 1e-4));
        assert!(close(lr_at_epoch(&c, 49).unwrap(), 1e-4));
    }

    #[test]
    fn empty_schedule_is_constant() {
        let c = TrainConfig { decay_epochs: vec![], ..TrainConfig::bbox_default() };
        for e in 0..50 {
            assert_eq!(lr_at_epoch(&c, e).unwrap(), 1e-2);
        }
    }

    #[test]
    fn out_of_range_epoch() {
        let c = TrainConfig::mask_default();
        assert!(matches!(lr_at_epoch(&c, 30), Err(Error::Domain(_))));
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::mask_default().validate().is_ok());
        let bad = TrainConfig { decay_epochs: vec![20, 10], ..TrainConfig::mask_default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { decay_factor: 0.0, ..TrainConfig::mask_default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { decay_epochs: vec![31], ..TrainConfig::mask_default() };
        assert!(bad.validate().is_err());
    }
}
