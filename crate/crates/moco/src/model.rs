//! Query/momentum encoder pair with MLP projection and prediction heads.
//!
//! Head layers carry batch normalization and ReLU except the last layer of
//! each head. The momentum branch has no prediction head and never
//! receives gradients.

use mfvit_backbone::{VitConfig, VitEncoder};
use mfvit_phase::Image2D;
use mfvit_tensor::checkpoint::TensorStore;
use mfvit_tensor::nn::{BatchNorm, Linear, Mode};
use mfvit_tensor::{Element, Tensor};
use rand::Rng;

use crate::config::MocoConfig;
use crate::error::Result;

pub struct ProjectionHead<E: Element> {
    pub l1: Linear<E>,
    pub bn1: BatchNorm<E>,
    pub l2: Linear<E>,
    pub bn2: BatchNorm<E>,
    pub l3: Linear<E>,
}

impl<E: Element> ProjectionHead<E> {
    fn new(input: usize, hidden: usize, out: usize, rng: &mut impl Rng) -> Self {
        ProjectionHead {
            l1: Linear::new(input, hidden, rng),
            bn1: BatchNorm::new(hidden),
            l2: Linear::new(hidden, hidden, rng),
            bn2: BatchNorm::new(hidden),
            l3: Linear::new(hidden, out, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<E>, mode: Mode) -> Result<Tensor<E>> {
        let x = self.bn1.forward(&self.l1.forward(x)?, mode)?.relu();
        let x = self.bn2.forward(&self.l2.forward(&x)?, mode)?.relu();
        Ok(self.l3.forward(&x)?)
    }

    fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        let mut out = self.l1.named_params(&format!("{prefix}.l1"));
        out.extend(self.bn1.named_params(&format!("{prefix}.bn1")));
        out.extend(self.l2.named_params(&format!("{prefix}.l2")));
        out.extend(self.bn2.named_params(&format!("{prefix}.bn2")));
        out.extend(self.l3.named_params(&format!("{prefix}.l3")));
        out
    }

    fn named_buffers(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        let mut out = self.bn1.named_buffers(&format!("{prefix}.bn1"));
        out.extend(self.bn2.named_buffers(&format!("{prefix}.bn2")));
        out
    }
}

pub struct PredictionHead<E: Element> {
    pub l1: Linear<E>,
    pub bn1: BatchNorm<E>,
    pub l2: Linear<E>,
}

impl<E: Element> PredictionHead<E> {
    fn new(input: usize, hidden: usize, out: usize, rng: &mut impl Rng) -> Self {
        PredictionHead {
            l1: Linear::new(input, hidden, rng),
            bn1: BatchNorm::new(hidden),
            l2: Linear::new(hidden, out, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<E>, mode: Mode) -> Result<Tensor<E>> {
        let x = self.bn1.forward(&self.l1.forward(x)?, mode)?.relu();
        Ok(self.l2.forward(&x)?)
    }

    fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        let mut out = self.l1.named_params(&format!("{prefix}.l1"));
        out.extend(self.bn1.named_params(&format!("{prefix}.bn1")));
        out.extend(self.l2.named_params(&format!("{prefix}.l2")));
        out
    }

    fn named_buffers(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        self.bn1.named_buffers(&format!("{prefix}.bn1"))
    }
}

pub struct MocoModel<E: Element> {
    pub query_encoder: VitEncoder<E>,
    pub query_proj: ProjectionHead<E>,
    pub query_pred: PredictionHead<E>,
    pub key_encoder: VitEncoder<E>,
    pub key_proj: ProjectionHead<E>,
}

impl<E: Element> MocoModel<E> {
    /// Builds the pair; the momentum branch starts as an exact copy of the
    /// query branch and is frozen.
    pub fn new(cfg: &MocoConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let dim = cfg.vit.embed_dim;
        let query_encoder = VitEncoder::new(&cfg.vit, rng)?;
        let query_proj = ProjectionHead::new(dim, cfg.proj_hidden, cfg.proj_out, rng);
        let query_pred = PredictionHead::new(cfg.proj_out, cfg.pred_hidden, cfg.proj_out, rng);
        // Fresh structures, then overwrite with the query weights.
        let key_encoder = VitEncoder::new(&cfg.vit, rng)?;
        let key_proj = ProjectionHead::new(dim, cfg.proj_hidden, cfg.proj_out, rng);
        let model = MocoModel {
            query_encoder,
            query_proj,
            query_pred,
            key_encoder,
            key_proj,
        };
        for ((_, q), (_, k)) in model
            .query_branch_params()
            .iter()
            .zip(model.key_branch_params())
        {
            k.value_mut().copy_from_slice(&q.value_vec());
            k.set_requires_grad(false);
        }
        Ok(model)
    }

    pub fn vit_config(&self) -> &VitConfig {
        &self.query_encoder.cfg
    }

    /// Query-branch parameters that have momentum twins (encoder +
    /// projection head, in matching order).
    pub fn query_branch_params(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = self.query_encoder.named_params();
        out.extend(self.query_proj.named_params("proj"));
        out
    }

    pub fn key_branch_params(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = self.key_encoder.named_params();
        out.extend(self.key_proj.named_params("proj"));
        out
    }

    /// Everything the optimizer trains (query branch + prediction head).
    pub fn trainable_params(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = self.query_branch_params();
        out.extend(self.query_pred.named_params("pred"));
        out
    }

    /// Query path: encoder → projection → prediction, then row-wise L2
    /// normalization.
    pub fn query_representations(&self, images: &[&Image2D], mode: Mode) -> Result<Tensor<E>> {
        let cls: Vec<Tensor<E>> = images
            .iter()
            .map(|img| Ok(self.query_encoder.forward_image(img, mode)?.cls()))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor<E>> = cls.iter().collect();
        let feats = Tensor::concat_rows(&refs)?;
        let proj = self.query_proj.forward(&feats, mode)?;
        let pred = self.query_pred.forward(&proj, mode)?;
        Ok(pred.l2_normalize_rows()?)
    }

    /// Momentum path: encoder → projection, L2-normalized, gradient-free.
    pub fn key_representations(&self, images: &[&Image2D], mode: Mode) -> Result<Tensor<E>> {
        let cls: Vec<Tensor<E>> = images
            .iter()
            .map(|img| Ok(self.key_encoder.forward_image(img, mode)?.cls()))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor<E>> = cls.iter().collect();
        let feats = Tensor::concat_rows(&refs)?;
        let proj = self.key_proj.forward(&feats, mode)?;
        Ok(proj.l2_normalize_rows()?.detach())
    }

    /// Full state for checkpoints: query branch under canonical names
    /// (`encoder.*`, `proj.*`, `pred.*`), momentum branch under
    /// `momentum.*`, plus BN running statistics.
    pub fn to_store(&self) -> TensorStore {
        let mut store = TensorStore::new();
        for (name, t) in self.trainable_params() {
            store.insert(&name, &t);
        }
        for (name, t) in self
            .query_proj
            .named_buffers("proj")
            .into_iter()
            .chain(self.query_pred.named_buffers("pred"))
        {
            store.insert(&name, &t);
        }
        for (name, t) in self.key_branch_params() {
            store.insert(&format!("momentum.{name}"), &t);
        }
        for (name, t) in self.key_proj.named_buffers("proj") {
            store.insert(&format!("momentum.{name}"), &t);
        }
        store
    }

    pub fn load_store(&self, store: &TensorStore) -> Result<()> {
        for (name, t) in self.trainable_params() {
            store.load_into(&name, &t)?;
        }
        for (name, t) in self
            .query_proj
            .named_buffers("proj")
            .into_iter()
            .chain(self.query_pred.named_buffers("pred"))
        {
            store.load_into(&name, &t)?;
        }
        for (name, t) in self.key_branch_params() {
            store.load_into(&format!("momentum.{name}"), &t)?;
        }
        for (name, t) in self.key_proj.named_buffers("proj") {
            store.load_into(&format!("momentum.{name}"), &t)?;
        }
        Ok(())
    }
}
