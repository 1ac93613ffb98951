//! The self-supervised pretraining loop.

use std::io::Write;
use std::path::Path;

use mfvit_phase::{augment, AugmentConfig, Image2D};
use mfvit_tensor::checkpoint::Sidecar;
use mfvit_tensor::nn::Mode;
use mfvit_tensor::optim::{Optimizer, OptimizerKind};
use mfvit_tensor::schedule::{effective_base_lr, LrSchedule};
use mfvit_tensor::seeding::derive_seed;
use mfvit_tensor::Element;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::MocoConfig;
use crate::error::{MocoError, Result};
use crate::loss::info_nce_batch;
use crate::model::MocoModel;
use crate::momentum::{momentum_at, momentum_update};
use crate::queue::RepresentationQueue;

/// Two independent augmentation draws of one image.
pub fn two_view(image: &Image2D, seed: u64, cfg: &AugmentConfig) -> Result<(Image2D, Image2D)> {
    let x_q = augment(image, derive_seed(seed, 1), cfg)?;
    let x_k = augment(image, derive_seed(seed, 2), cfg)?;
    Ok((x_q, x_k))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub momentum: f64,
}

pub struct PretrainResult<E: Element> {
    pub model: MocoModel<E>,
    pub log: Vec<EpochLog>,
    pub queue: RepresentationQueue<E>,
}

/// Appends `epoch,mean_loss,lr,momentum` rows, writing the header only when
/// the file starts empty.
pub fn append_training_log(path: &Path, rows: &[EpochLog]) -> Result<()> {
    let fresh = !path.exists();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    if fresh {
        writeln!(file, "epoch,mean_loss,lr,momentum")?;
    }
    for r in rows {
        writeln!(file, "{},{},{},{}", r.epoch, r.mean_loss, r.lr, r.momentum)?;
    }
    Ok(())
}

/// Pretrains on unlabeled images. When `out` is given, the final checkpoint
/// lands there (sidecar beside it, CSV log at `<out>.log.csv`, and
/// per-N-epoch snapshots at `<out>.epoch{N}` when configured).
pub fn pretrain<E: Element>(
    images: &[Image2D],
    cfg: &MocoConfig,
    seed: u64,
    out: Option<&Path>,
) -> Result<PretrainResult<E>> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(MocoError::Config("pretraining dataset is empty".into()));
    }
    if images.len() < 2 {
        return Err(MocoError::Config(
            "pretraining needs ≥ 2 images for batch statistics".into(),
        ));
    }

    let model = MocoModel::<E>::new(cfg, &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0)))?;
    let mut queue = RepresentationQueue::<E>::new(cfg.queue_size, cfg.proj_out);
    let trainable = model.trainable_params();
    let mut opt = Optimizer::new(OptimizerKind::adamw(cfg.weight_decay));
    let schedule = LrSchedule::cosine_with_warmup(
        cfg.warmup_epochs,
        cfg.epochs,
        effective_base_lr(cfg.lr, cfg.batch_size),
        0.0,
    )
    .map_err(MocoError::Tensor)?;
    let aug = AugmentConfig {
        resize_to: cfg.vit.image_size,
        max_rotation: cfg.max_rotation,
        hflip_prob: cfg.hflip_prob,
    };

    let steps_per_epoch = (images.len() / cfg.batch_size).max(1);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut global_step = 0usize;
    let mut momentum = cfg.m_start;

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 10_000 + epoch as u64));
        order.shuffle(&mut rng);
        let lr = schedule.lr_at(epoch).map_err(MocoError::Tensor)?;
        let mut loss_sum = 0.0;
        let mut batches = 0usize;

        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                break; // a trailing singleton cannot feed batch normalization
            }
            let mut views_q = Vec::with_capacity(chunk.len());
            let mut views_k = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = derive_seed(seed, (epoch * images.len() + i) as u64 ^ 0x5eed);
                let (xq, xk) = two_view(&images[i], s, &aug)?;
                views_q.push(xq);
                views_k.push(xk);
            }
            let q_refs: Vec<&Image2D> = views_q.iter().collect();
            let k_refs: Vec<&Image2D> = views_k.iter().collect();

            let keys = model.key_representations(&k_refs, Mode::Train)?;
            if queue.is_empty() {
                // Cold start: the very first batch seeds the queue before
                // its own loss is computed.
                for i in 0..keys.rows() {
                    queue.push(keys.slice_rows(i, 1)?.value_vec())?;
                }
                let queries = model.query_representations(&q_refs, Mode::Train)?;
                let loss = info_nce_batch(&queries, &keys, &queue, cfg.tau)?;
                optimize_step(&loss, &trainable, &mut opt, lr, epoch, step, global_step)?;
                loss_sum += loss.item().to_f64();
            } else {
                let queries = model.query_representations(&q_refs, Mode::Train)?;
                let loss = info_nce_batch(&queries, &keys, &queue, cfg.tau)?;
                optimize_step(&loss, &trainable, &mut opt, lr, epoch, step, global_step)?;
                loss_sum += loss.item().to_f64();
                for i in 0..keys.rows() {
                    queue.push(keys.slice_rows(i, 1)?.value_vec())?;
                }
            }

            let t = (epoch as f64 + (step + 1) as f64 / steps_per_epoch as f64) / cfg.epochs as f64;
            momentum = momentum_at(t.min(1.0), cfg);
            momentum_update(
                &model.query_branch_params(),
                &model.key_branch_params(),
                momentum,
            )?;
            global_step += 1;
            batches += 1;
        }

        log.push(EpochLog {
            epoch,
            mean_loss: loss_sum / batches.max(1) as f64,
            lr,
            momentum,
        });

        if let Some(path) = out {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                let snap = path.with_extension(format!("epoch{}", epoch + 1));
                model.to_store().save(&snap)?;
            }
        }
    }

    if let Some(path) = out {
        model.to_store().save(path)?;
        Sidecar {
            config: serde_json::to_value(cfg).unwrap_or_default(),
            seeds: vec![seed],
            fingerprints: Default::default(),
        }
        .save(path)?;
        let mut log_path = path.as_os_str().to_os_string();
        log_path.push(".log.csv");
        append_training_log(Path::new(&log_path), &log)?;
    }

    Ok(PretrainResult { model, log, queue })
}

fn optimize_step<E: Element>(
    loss: &mfvit_tensor::Tensor<E>,
    trainable: &[(String, mfvit_tensor::Tensor<E>)],
    opt: &mut Optimizer<E>,
    lr: f64,
    epoch: usize,
    step: usize,
    global_step: usize,
) -> Result<()> {
    let l = loss.item().to_f64();
    if !l.is_finite() {
        return Err(MocoError::Numeric(format!(
            "non-finite loss at epoch {epoch}, step {step} (global step {global_step})"
        )));
    }
    loss.backward().map_err(MocoError::Tensor)?;
    opt.step(trainable, lr).map_err(MocoError::Tensor)?;
    Ok(())
}
