//! Supervised fine-tuning of a classifier under the LP or FT protocol:
//! SGD with cosine-annealed learning rate and cross-entropy loss.

use mfvit_phase::{augment, resize_bilinear, AugmentConfig, Image2D};
use mfvit_tensor::nn::Mode;
use mfvit_tensor::optim::{Optimizer, OptimizerKind};
use mfvit_tensor::schedule::LrSchedule;
use mfvit_tensor::seeding::derive_seed;
use mfvit_tensor::{Element, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{apply_freeze_policy, Classifier, Protocol};
use crate::error::{BackboneError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Training-time augmentation; None trains on clean resized images.
    pub augment: Option<AugmentConfig>,
    /// Re-initialize the classifier head before training (the LP protocol
    /// always probes with fresh weights).
    pub reinit_head: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 90,
            batch_size: 16,
            base_lr: 0.03,
            min_lr: 0.0,
            momentum: 0.9,
            weight_decay: 0.0,
            augment: Some(AugmentConfig::default()),
            reinit_head: true,
        }
    }
}

/// Trains in place; returns per-epoch mean losses.
pub fn train_classifier<E: Element>(
    model: &mut Classifier<E>,
    images: &[Image2D],
    labels: &[usize],
    protocol: Protocol,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if images.is_empty() || images.len() != labels.len() {
        return Err(BackboneError::Config(format!(
            "need matching nonempty images/labels, got {}/{}",
            images.len(),
            labels.len()
        )));
    }
    let num_classes = model.config().num_classes;
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(BackboneError::Config(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    if cfg.reinit_head {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x68_65_61_64));
        model.reinit_head(&mut rng);
    }
    let trainable = apply_freeze_policy(model, protocol);
    let schedule = LrSchedule::cosine_annealing(cfg.epochs, cfg.base_lr, cfg.min_lr)?;
    let mut opt = Optimizer::new(OptimizerKind::SgdMomentum {
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
    });

    let net_size = model.config().image_size;
    let fit = |img: &Image2D| -> Result<Image2D> {
        if img.width() == net_size && img.height() == net_size {
            Ok(img.clone())
        } else {
            Ok(resize_bilinear(img, net_size, net_size)?)
        }
    };

    // Linear probing on clean images never re-runs the frozen encoder:
    // CLS features are cached once.
    let cached: Option<Vec<Tensor<E>>> =
        if protocol == Protocol::LinearProbe && cfg.augment.is_none() {
            let feats = images
                .iter()
                .map(|img| Ok(model.features(&fit(img)?, Mode::Eval)?.detach()))
                .collect::<Result<Vec<_>>>()?;
            Some(feats)
        } else {
            None
        };

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..images.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1_000 + epoch as u64));
        order.shuffle(&mut rng);
        let lr = schedule.lr_at(epoch)?;
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let targets: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let logits = match &cached {
                Some(feats) => {
                    let rows: Vec<&Tensor<E>> = chunk.iter().map(|&i| &feats[i]).collect();
                    model.head.forward(&Tensor::concat_rows(&rows)?)?
                }
                None => {
                    let mut batch_imgs = Vec::with_capacity(chunk.len());
                    for &i in chunk {
                        let img = match &cfg.augment {
                            Some(aug) => {
                                let mut aug = aug.clone();
                                aug.resize_to = net_size;
                                let s = derive_seed(seed, (epoch * images.len() + i) as u64);
                                augment(&images[i], s, &aug)?
                            }
                            None => fit(&images[i])?,
                        };
                        batch_imgs.push(img);
                    }
                    let refs: Vec<&Image2D> = batch_imgs.iter().collect();
                    model.forward_images(&refs, Mode::Train)?
                }
            };
            let loss = logits.cross_entropy(&targets)?;
            loss.backward()?;
            opt.step(&trainable, lr)?;
            loss_sum += loss.item().to_f64();
            batches += 1;
        }
        epoch_losses.push(loss_sum / batches.max(1) as f64);
    }
    Ok(epoch_losses)
}
