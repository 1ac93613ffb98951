//! The dual-branch fusion model and its training loop.

use mfvit_backbone::{Classifier, VitConfig, VitEncoder};
use mfvit_phase::{augment, resize_bilinear, AugmentConfig, Image2D};
use mfvit_tensor::checkpoint::TensorStore;
use mfvit_tensor::nn::{Linear, Mode};
use mfvit_tensor::optim::{Optimizer, OptimizerKind};
use mfvit_tensor::schedule::LrSchedule;
use mfvit_tensor::seeding::derive_seed;
use mfvit_tensor::{Element, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cross_attention::{ca_block_forward, CaBlock};
use crate::distill::{hard_distill_loss, teacher_labels, DistillBatch};
use crate::error::{FusionError, Result};

/// Fusion variants: the cross-attention model and the no-CA linear-probe
/// baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    CrossAttention,
    LinearProbe,
}

impl std::str::FromStr for FusionMode {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ca" | "cross-attention" | "cross_attention" => Ok(FusionMode::CrossAttention),
            "lp" | "linear-probe" | "linear_probe" => Ok(FusionMode::LinearProbe),
            other => Err(FusionError::Config(format!(
                "unknown fusion mode {other:?} (expected ca or lp)"
            ))),
        }
    }
}

pub struct FusionModel<E: Element> {
    pub cxr_encoder: VitEncoder<E>,
    pub enh_encoder: VitEncoder<E>,
    pub ca: CaBlock<E>,
    pub head_cxr: Linear<E>,
    pub head_enh: Linear<E>,
    /// Content hashes of the branch checkpoints the encoders were loaded
    /// from; persisted to detect mismatched loading downstream.
    pub branch_fingerprints: (String, String),
}

impl<E: Element> FusionModel<E> {
    /// Fresh model with randomly initialized branches (tests, scaffolding).
    pub fn new(cfg: &VitConfig, rng: &mut impl Rng) -> Result<Self> {
        let cxr_encoder = VitEncoder::new(cfg, rng)?;
        let enh_encoder = VitEncoder::new(cfg, rng)?;
        let ca = CaBlock::new(cfg.embed_dim, 3, rng)?;
        let head_cxr = Linear::new(cfg.embed_dim, cfg.num_classes, rng);
        let head_enh = Linear::new(cfg.embed_dim, cfg.num_classes, rng);
        let model = FusionModel {
            cxr_encoder,
            enh_encoder,
            ca,
            head_cxr,
            head_enh,
            branch_fingerprints: (String::new(), String::new()),
        };
        model.freeze_branches(true);
        Ok(model)
    }

    /// Branches initialized from fine-tuned single-branch checkpoints
    /// (classifier stores); encoders start frozen.
    pub fn from_branches(
        cfg: &VitConfig,
        cxr_store: &TensorStore,
        enh_store: &TensorStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut model = Self::new(cfg, rng)?;
        for (name, t) in model.cxr_encoder.named_params() {
            cxr_store.load_into(&name, &t)?;
        }
        for (name, t) in model.enh_encoder.named_params() {
            enh_store.load_into(&name, &t)?;
        }
        model.branch_fingerprints = (cxr_store.content_hash(), enh_store.content_hash());
        model.freeze_branches(true);
        Ok(model)
    }

    /// Detects mismatched branch loading: the given stores must hash to
    /// the fingerprints this model was built from.
    pub fn verify_fingerprints(
        &self,
        cxr_store: &TensorStore,
        enh_store: &TensorStore,
    ) -> Result<()> {
        let got = (cxr_store.content_hash(), enh_store.content_hash());
        if got != self.branch_fingerprints {
            return Err(FusionError::Config(format!(
                "branch checkpoint fingerprints do not match: expected ({}, {}), got ({}, {})",
                self.branch_fingerprints.0, self.branch_fingerprints.1, got.0, got.1
            )));
        }
        Ok(())
    }

    pub fn freeze_branches(&self, frozen: bool) {
        for (_, t) in self
            .cxr_encoder
            .named_params()
            .into_iter()
            .chain(self.enh_encoder.named_params())
        {
            t.set_requires_grad(!frozen);
        }
    }

    pub fn config(&self) -> &VitConfig {
        &self.cxr_encoder.cfg
    }

    /// Trainable set per mode: CA trains the cross-attention projections
    /// plus both heads; LP trains the two heads only.
    pub fn trainable_params(&self, mode: FusionMode) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        if mode == FusionMode::CrossAttention {
            out.extend(self.ca.named_params());
        }
        out.extend(self.head_cxr.named_params("head_cxr"));
        out.extend(self.head_enh.named_params("head_enh"));
        out
    }

    /// Logits for a batch of (CXR, enhanced) pairs.
    ///
    /// Per branch the encoder tokens and (in CA mode) the cross-attention
    /// output are summed elementwise; each branch's CLS row goes through
    /// its linear head and the two head outputs are summed.
    pub fn forward_batch(
        &self,
        pairs: &[(&Image2D, &Image2D)],
        mode: FusionMode,
        net_mode: Mode,
    ) -> Result<Tensor<E>> {
        if pairs.is_empty() {
            return Err(FusionError::Config("empty batch".into()));
        }
        let mut cls_cxr_rows = Vec::with_capacity(pairs.len());
        let mut cls_enh_rows = Vec::with_capacity(pairs.len());
        for (img_cxr, img_enh) in pairs {
            let t_cxr = self.cxr_encoder.forward_image(img_cxr, net_mode)?;
            let t_enh = self.enh_encoder.forward_image(img_enh, net_mode)?;
            match mode {
                FusionMode::CrossAttention => {
                    let (z_cxr, z_enh) = ca_block_forward(&t_cxr, &t_enh, &self.ca)?;
                    let s_cxr = z_cxr.tensor().add(t_cxr.tensor())?;
                    let s_enh = z_enh.tensor().add(t_enh.tensor())?;
                    cls_cxr_rows.push(s_cxr.slice_rows(0, 1)?);
                    cls_enh_rows.push(s_enh.slice_rows(0, 1)?);
                }
                FusionMode::LinearProbe => {
                    cls_cxr_rows.push(t_cxr.cls());
                    cls_enh_rows.push(t_enh.cls());
                }
            }
        }
        let cxr_refs: Vec<&Tensor<E>> = cls_cxr_rows.iter().collect();
        let enh_refs: Vec<&Tensor<E>> = cls_enh_rows.iter().collect();
        let logits_cxr = self.head_cxr.forward(&Tensor::concat_rows(&cxr_refs)?)?;
        let logits_enh = self.head_enh.forward(&Tensor::concat_rows(&enh_refs)?)?;
        Ok(logits_cxr.add(&logits_enh)?)
    }

    /// Single-pair logits (1×classes).
    pub fn forward_pair(
        &self,
        image_cxr: &Image2D,
        image_enh: &Image2D,
        mode: FusionMode,
        net_mode: Mode,
    ) -> Result<Tensor<E>> {
        self.forward_batch(&[(image_cxr, image_enh)], mode, net_mode)
    }

    pub fn predict(&self, pairs: &[(&Image2D, &Image2D)], mode: FusionMode) -> Result<Vec<usize>> {
        let logits = self.forward_batch(pairs, mode, Mode::Eval)?;
        Ok(teacher_labels(&logits))
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<E>)> {
        let mut out: Vec<(String, Tensor<E>)> = self
            .cxr_encoder
            .named_params()
            .into_iter()
            .map(|(n, t)| (format!("cxr.{n}"), t))
            .collect();
        out.extend(
            self.enh_encoder
                .named_params()
                .into_iter()
                .map(|(n, t)| (format!("enh.{n}"), t)),
        );
        out.extend(self.ca.named_params());
        out.extend(self.head_cxr.named_params("head_cxr"));
        out.extend(self.head_enh.named_params("head_enh"));
        out
    }

    pub fn to_store(&self) -> TensorStore {
        let mut store = TensorStore::new();
        for (name, t) in self.named_params() {
            store.insert(&name, &t);
        }
        store
    }

    pub fn load_store(&self, store: &TensorStore) -> Result<()> {
        for (name, t) in self.named_params() {
            store.load_into(&name, &t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FusionTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub augment: Option<AugmentConfig>,
    /// Branch encoders stay frozen by default; flip to fine-tune them too.
    pub unfreeze_branches: bool,
}

impl Default for FusionTrainConfig {
    fn default() -> Self {
        FusionTrainConfig {
            epochs: 90,
            batch_size: 16,
            base_lr: 0.03,
            min_lr: 0.0,
            momentum: 0.9,
            weight_decay: 0.0,
            augment: Some(AugmentConfig::default()),
            unfreeze_branches: false,
        }
    }
}

/// One labeled training pair.
pub struct FusionSample {
    pub cxr: Image2D,
    pub enh: Image2D,
    pub label: usize,
}

/// Trains the fusion model.
///
/// CA mode uses hard-label distillation: the standalone fine-tuned
/// classifiers are re-run per augmented batch in eval mode as teachers.
/// LP mode trains the two linear heads with plain cross-entropy.
pub fn train_fusion<E: Element>(
    dataset: &[FusionSample],
    model: &mut FusionModel<E>,
    teachers: Option<(&Classifier<E>, &Classifier<E>)>,
    mode: FusionMode,
    cfg: &FusionTrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(FusionError::Config("fusion training set is empty".into()));
    }
    let classes = model.config().num_classes;
    if let Some(bad) = dataset.iter().find(|s| s.label >= classes) {
        return Err(FusionError::Config(format!(
            "label {} out of range for {classes} classes",
            bad.label
        )));
    }
    if mode == FusionMode::CrossAttention && teachers.is_none() {
        return Err(FusionError::Config(
            "cross-attention training requires both teacher checkpoints".into(),
        ));
    }

    model.freeze_branches(!cfg.unfreeze_branches);
    let mut trainable = model.trainable_params(mode);
    if cfg.unfreeze_branches {
        trainable.extend(
            model
                .cxr_encoder
                .named_params()
                .into_iter()
                .map(|(n, t)| (format!("cxr.{n}"), t)),
        );
        trainable.extend(
            model
                .enh_encoder
                .named_params()
                .into_iter()
                .map(|(n, t)| (format!("enh.{n}"), t)),
        );
    }
    let schedule = LrSchedule::cosine_annealing(cfg.epochs, cfg.base_lr, cfg.min_lr)
        .map_err(FusionError::Tensor)?;
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

    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 40_000 + epoch as u64));
        order.shuffle(&mut rng);
        let lr = schedule.lr_at(epoch).map_err(FusionError::Tensor)?;
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut imgs: Vec<(Image2D, Image2D)> = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = &dataset[i];
                match &cfg.augment {
                    Some(aug) => {
                        let mut aug = aug.clone();
                        aug.resize_to = net_size;
                        // One seed per sample: the same geometric transform
                        // lands on both branch inputs.
                        let sd = derive_seed(seed, (epoch * dataset.len() + i) as u64);
                        imgs.push((augment(&s.cxr, sd, &aug)?, augment(&s.enh, sd, &aug)?));
                    }
                    None => imgs.push((fit(&s.cxr)?, fit(&s.enh)?)),
                }
            }
            let pairs: Vec<(&Image2D, &Image2D)> = imgs.iter().map(|(a, b)| (a, b)).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| dataset[i].label).collect();
            let logits = model.forward_batch(&pairs, mode, Mode::Train)?;

            let loss = match mode {
                FusionMode::CrossAttention => {
                    let (t_cxr, t_enh) = teachers.expect("checked above");
                    let cxr_inputs: Vec<&Image2D> = imgs.iter().map(|(a, _)| a).collect();
                    let enh_inputs: Vec<&Image2D> = imgs.iter().map(|(_, b)| b).collect();
                    let z_cxr = t_cxr.forward_images(&cxr_inputs, Mode::Eval)?.detach();
                    let z_enh = t_enh.forward_images(&enh_inputs, Mode::Eval)?.detach();
                    hard_distill_loss(&DistillBatch::new(logits, z_cxr, z_enh, labels)?)?
                }
                FusionMode::LinearProbe => logits.cross_entropy(&labels)?,
            };
            loss.backward().map_err(FusionError::Tensor)?;
            opt.step(&trainable, lr).map_err(FusionError::Tensor)?;
            loss_sum += loss.item().to_f64();
            batches += 1;
        }
        losses.push(loss_sum / batches.max(1) as f64);
    }
    Ok(losses)
}
