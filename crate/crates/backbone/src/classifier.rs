//! Encoder + linear head, and the LP/FT freeze policies.

use mfvit_phase::Image2D;
use mfvit_tensor::checkpoint::TensorStore;
use mfvit_tensor::nn::{Linear, Mode};
use mfvit_tensor::{Element, Tensor};
use rand::Rng;

use crate::config::VitConfig;
use crate::error::{BackboneError, Result};
use crate::vit::VitEncoder;

/// Fine-tuning protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Frozen encoder, only a re-initialized linear classifier trains.
    LinearProbe,
    /// Every parameter trains.
    FineTune,
}

impl std::str::FromStr for Protocol {
    type Err = BackboneError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lp" | "linear-probe" | "linear_probe" => Ok(Protocol::LinearProbe),
            "ft" | "fine-tune" | "fine_tune" | "finetune" => Ok(Protocol::FineTune),
            other => Err(BackboneError::Config(format!(
                "unknown protocol {other:?} (expected lp or ft)"
            ))),
        }
    }
}

pub struct Classifier<E: Element> {
    pub encoder: VitEncoder<E>,
    pub head: Linear<E>,
}

impl<E: Element> Classifier<E> {
    pub fn new(cfg: &VitConfig, rng: &mut impl Rng) -> Result<Self> {
        let encoder = VitEncoder::new(cfg, rng)?;
        let head = Linear::new(cfg.embed_dim, cfg.num_classes, rng);
        Ok(Classifier { encoder, head })
    }

    pub fn config(&self) -> &VitConfig {
        &self.encoder.cfg
    }

    pub fn reinit_head(&mut self, rng: &mut impl Rng) {
        self.head = Linear::new(self.config().embed_dim, self.config().num_classes, rng);
    }

    /// CLS representation of one image after the final LayerNorm.
    pub fn features(&self, image: &Image2D, mode: Mode) -> Result<Tensor<E>> {
        Ok(self.encoder.forward_image(image, mode)?.cls())
    }

    /// Batch logits [B×classes].
    pub fn forward_images(&self, images: &[&Image2D], mode: Mode) -> Result<Tensor<E>> {
        if images.is_empty() {
            return Err(BackboneError::Config("empty batch".into()));
        }
        let cls_rows: Vec<Tensor<E>> = images
            .iter()
            .map(|img| self.features(img, mode))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor<E>> = cls_rows.iter().collect();
        let feats = Tensor::concat_rows(&refs)?;
        Ok(self.head.forward(&feats)?)
    }

    pub fn predict(&self, images: &[&Image2D]) -> Result<Vec<usize>> {
        let logits = self.forward_images(images, Mode::Eval)?;
        let v = logits.value_vec();
        let c = logits.cols();
        Ok((0..logits.rows())
            .map(|i| {
                let row = &v[i * c..(i + 1) * c];
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                    .map(|(j, _)| j)
                    .unwrap_or(0)
            })
            .collect())
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = self.encoder.named_params();
        out.extend(self.head.named_params("head"));
        out
    }

    pub fn to_store(&self) -> TensorStore {
        let mut store = TensorStore::new();
        for (name, t) in self.named_params() {
            store.insert(&name, &t);
        }
        store
    }

    /// Strict load: every parameter must be present with matching shape.
    pub fn load_store(&self, store: &TensorStore) -> Result<()> {
        for (name, t) in self.named_params() {
            store.load_into(&name, &t)?;
        }
        Ok(())
    }

    /// Loads only `encoder.*` weights (e.g. out of a pretraining
    /// checkpoint), leaving the head as constructed.
    pub fn load_encoder_from(&self, store: &TensorStore) -> Result<()> {
        for (name, t) in self.encoder.named_params() {
            store.load_into(&name, &t)?;
        }
        Ok(())
    }
}

/// Marks the trainable set for a protocol and returns it.
pub fn apply_freeze_policy<E: Element>(
    model: &Classifier<E>,
    protocol: Protocol,
) -> Vec<(String, Tensor<E>)> {
    match protocol {
        Protocol::LinearProbe => {
            for (_, t) in model.encoder.named_params() {
                t.set_requires_grad(false);
            }
            let head = model.head.named_params("head");
            for (_, t) in &head {
                t.set_requires_grad(true);
            }
            head
        }
        Protocol::FineTune => {
            let all = model.named_params();
            for (_, t) in &all {
                t.set_requires_grad(true);
            }
            all
        }
    }
}
