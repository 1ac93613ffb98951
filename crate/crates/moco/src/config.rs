//! Pretraining hyperparameters.

use mfvit_backbone::VitConfig;
use serde::{Deserialize, Serialize};

use crate::error::{MocoError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MocoConfig {
    pub vit: VitConfig,
    /// InfoNCE temperature.
    pub tau: f64,
    /// Capacity of the FIFO key queue.
    pub queue_size: usize,
    pub proj_hidden: usize,
    pub proj_out: usize,
    pub pred_hidden: usize,
    /// Momentum-coefficient cosine endpoints.
    pub m_start: f64,
    pub m_end: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    /// Pre-scaling AdamW learning rate; the effective base rate is
    /// lr × batch/4.
    pub lr: f64,
    pub weight_decay: f64,
    pub max_rotation: f64,
    pub hflip_prob: f64,
    /// Write an intermediate checkpoint every N epochs (0 = only final).
    pub checkpoint_every: usize,
}

impl MocoConfig {
    pub fn full() -> Self {
        MocoConfig {
            vit: VitConfig::vit_small(),
            tau: 0.2,
            queue_size: 4096,
            proj_hidden: 4096,
            proj_out: 256,
            pred_hidden: 4096,
            m_start: 0.9,
            m_end: 0.999,
            epochs: 300,
            warmup_epochs: 40,
            batch_size: 16,
            lr: 1.5e-4,
            weight_decay: 0.1,
            max_rotation: 10.0,
            hflip_prob: 0.5,
            checkpoint_every: 0,
        }
    }

    pub fn toy() -> Self {
        MocoConfig {
            vit: VitConfig::toy(),
            tau: 0.2,
            queue_size: 256,
            proj_hidden: 128,
            proj_out: 64,
            pred_hidden: 128,
            m_start: 0.9,
            m_end: 0.999,
            epochs: 20,
            warmup_epochs: 2,
            batch_size: 16,
            lr: 1.5e-4,
            weight_decay: 0.1,
            max_rotation: 10.0,
            hflip_prob: 0.5,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vit.validate()?;
        if !(self.tau > 0.0) {
            return Err(MocoError::Config("tau must be > 0".into()));
        }
        if !(0.0 <= self.m_start && self.m_start <= self.m_end && self.m_end <= 1.0) {
            return Err(MocoError::Config(format!(
                "momentum bounds must satisfy 0 ≤ m_start ≤ m_end ≤ 1, got {} / {}",
                self.m_start, self.m_end
            )));
        }
        if self.queue_size == 0 {
            return Err(MocoError::Config("queue_size must be ≥ 1".into()));
        }
        if self.epochs == 0 || self.warmup_epochs >= self.epochs {
            return Err(MocoError::Config(format!(
                "need 0 ≤ warmup {} < epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.batch_size < 2 {
            return Err(MocoError::Config(
                "batch_size must be ≥ 2 (BN heads need batch statistics)".into(),
            ));
        }
        Ok(())
    }
}
