//! Learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};

/// Cosine decay with an optional linear warmup ramp.
///
/// Warmup ramps linearly from 0 to `base_lr` so that `lr_at(warmup_epochs)`
/// is exactly `base_lr`; the cosine tail ends at exactly `min_lr` on the
/// final epoch.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LrSchedule {
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub base_lr: f64,
    pub min_lr: f64,
}

impl LrSchedule {
    pub fn cosine_with_warmup(
        warmup_epochs: usize,
        total_epochs: usize,
        base_lr: f64,
        min_lr: f64,
    ) -> Result<Self> {
        if warmup_epochs >= total_epochs {
            return Err(TensorError::Config(format!(
                "warmup_epochs {warmup_epochs} must be < total_epochs {total_epochs}"
            )));
        }
        if min_lr > base_lr {
            return Err(TensorError::Config(format!(
                "min_lr {min_lr} must be ≤ base_lr {base_lr}"
            )));
        }
        Ok(LrSchedule {
            warmup_epochs,
            total_epochs,
            base_lr,
            min_lr,
        })
    }

    pub fn cosine_annealing(total_epochs: usize, base_lr: f64, min_lr: f64) -> Result<Self> {
        Self::cosine_with_warmup(0, total_epochs, base_lr, min_lr)
    }

    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(TensorError::Config(format!(
                "epoch {epoch} outside schedule of {} epochs",
                self.total_epochs
            )));
        }
        if epoch < self.warmup_epochs {
            return Ok(self.base_lr * epoch as f64 / self.warmup_epochs as f64);
        }
        let span = self.total_epochs - 1 - self.warmup_epochs;
        if span == 0 {
            return Ok(self.base_lr);
        }
        let t = (epoch - self.warmup_epochs) as f64 / span as f64;
        Ok(self.min_lr
            + (self.base_lr - self.min_lr) * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0)
    }
}

/// Linear batch-size scaling of the base learning rate: lr × batch/4.
pub fn effective_base_lr(lr: f64, batch_size: usize) -> f64 {
    lr * batch_size as f64 / 4.0
}
