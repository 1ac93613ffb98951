//! Patch embedding and the pre-norm transformer encoder stack.

use mfvit_phase::Image2D;
use mfvit_tensor::nn::{LayerNorm, Linear, Mode};
use mfvit_tensor::{Element, Tensor};
use rand::Rng;

use crate::config::VitConfig;
use crate::error::{BackboneError, Result};
use crate::pos_embed::sincos_pos_embed;

/// (num_tokens × embed_dim) activation with the CLS token at row 0.
pub struct TokenMatrix<E: Element> {
    inner: Tensor<E>,
}

impl<E: Element> TokenMatrix<E> {
    pub fn new(inner: Tensor<E>) -> Result<Self> {
        if !inner.is_matrix() || inner.rows() == 0 {
            return Err(BackboneError::Dimension(format!(
                "token matrix must be a nonempty 2-D tensor, got {:?}",
                inner.shape()
            )));
        }
        Ok(TokenMatrix { inner })
    }

    pub fn tensor(&self) -> &Tensor<E> {
        &self.inner
    }

    pub fn into_tensor(self) -> Tensor<E> {
        self.inner
    }

    pub fn num_tokens(&self) -> usize {
        self.inner.rows()
    }

    pub fn dim(&self) -> usize {
        self.inner.cols()
    }

    /// CLS token as a 1×dim tensor (row 0).
    pub fn cls(&self) -> Tensor<E> {
        self.inner.slice_rows(0, 1).expect("row 0 exists")
    }

    /// Patch tokens (rows 1..).
    pub fn patches(&self) -> Tensor<E> {
        self.inner
            .slice_rows(1, self.num_tokens() - 1)
            .expect("patch rows exist")
    }
}

pub struct SelfAttention<E: Element> {
    pub q: Linear<E>,
    pub k: Linear<E>,
    pub v: Linear<E>,
    pub o: Linear<E>,
    num_heads: usize,
}

impl<E: Element> SelfAttention<E> {
    fn new(dim: usize, num_heads: usize, rng: &mut impl Rng) -> Self {
        SelfAttention {
            q: Linear::new(dim, dim, rng),
            k: Linear::new(dim, dim, rng),
            v: Linear::new(dim, dim, rng),
            o: Linear::new(dim, dim, rng),
            num_heads,
        }
    }

    /// Returns the attended tokens plus one row-stochastic attention matrix
    /// per head.
    pub fn forward_with_attn(&self, x: &Tensor<E>) -> Result<(Tensor<E>, Vec<Tensor<E>>)> {
        let dim = x.cols();
        let dh = dim / self.num_heads;
        let scale = E::from_f64(1.0 / (dh as f64).sqrt());
        let q = self.q.forward(x)?;
        let k = self.k.forward(x)?;
        let v = self.v.forward(x)?;
        let mut heads = Vec::with_capacity(self.num_heads);
        let mut attns = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let qh = q.slice_cols(h * dh, dh)?;
            let kh = k.slice_cols(h * dh, dh)?;
            let vh = v.slice_cols(h * dh, dh)?;
            let logits = qh.matmul(&kh.transpose()?)?.scale(scale);
            let attn = logits.softmax(1)?;
            heads.push(attn.matmul(&vh)?);
            attns.push(attn);
        }
        let refs: Vec<&Tensor<E>> = heads.iter().collect();
        let merged = Tensor::concat_cols(&refs)?;
        Ok((self.o.forward(&merged)?, attns))
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(self.forward_with_attn(x)?.0)
    }

    fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        vec![
            (format!("{prefix}.wq"), self.q.weight.clone()),
            (format!("{prefix}.bq"), self.q.bias.clone()),
            (format!("{prefix}.wk"), self.k.weight.clone()),
            (format!("{prefix}.bk"), self.k.bias.clone()),
            (format!("{prefix}.wv"), self.v.weight.clone()),
            (format!("{prefix}.bv"), self.v.bias.clone()),
            (format!("{prefix}.wo"), self.o.weight.clone()),
            (format!("{prefix}.bo"), self.o.bias.clone()),
        ]
    }
}

pub struct Block<E: Element> {
    pub ln1: LayerNorm<E>,
    pub attn: SelfAttention<E>,
    pub ln2: LayerNorm<E>,
    pub fc1: Linear<E>,
    pub fc2: Linear<E>,
}

impl<E: Element> Block<E> {
    fn new(cfg: &VitConfig, rng: &mut impl Rng) -> Self {
        let dim = cfg.embed_dim;
        let hidden = dim * cfg.mlp_ratio;
        Block {
            ln1: LayerNorm::new(dim),
            attn: SelfAttention::new(dim, cfg.num_heads, rng),
            ln2: LayerNorm::new(dim),
            fc1: Linear::new(dim, hidden, rng),
            fc2: Linear::new(hidden, dim, rng),
        }
    }

    fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let attn_out = self.attn.forward(&self.ln1.forward(x)?)?;
        let x = x.add(&attn_out)?;
        let mlp = self
            .fc2
            .forward(&self.fc1.forward(&self.ln2.forward(&x)?)?.gelu())?;
        Ok(x.add(&mlp)?)
    }

    fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        let mut out = self.ln1.named_params(&format!("{prefix}.ln1"));
        out.extend(self.attn.named_params(&format!("{prefix}.attn")));
        out.extend(self.ln2.named_params(&format!("{prefix}.ln2")));
        out.extend(self.fc1.named_params(&format!("{prefix}.mlp.fc1")));
        out.extend(self.fc2.named_params(&format!("{prefix}.mlp.fc2")));
        out
    }
}

pub struct VitEncoder<E: Element> {
    pub cfg: VitConfig,
    pub patch_proj: Linear<E>,
    pub cls_token: Tensor<E>,
    /// Fixed (non-learned) position table for patch rows; CLS row is zero.
    pos: Tensor<E>,
    pub blocks: Vec<Block<E>>,
    pub final_norm: LayerNorm<E>,
}

impl<E: Element> VitEncoder<E> {
    pub fn new(cfg: &VitConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let dim = cfg.embed_dim;
        let patch_len = cfg.patch_size * cfg.patch_size;
        let bound = 1.0 / (dim as f64).sqrt();
        let cls_token = Tensor::param(
            &[1, dim],
            (0..dim)
                .map(|_| E::from_f64(rng.gen_range(-bound..bound)))
                .collect(),
        )?;
        let pos = sincos_pos_embed::<E>(cfg.patches_per_side(), dim)?;
        let blocks = (0..cfg.depth).map(|_| Block::new(cfg, rng)).collect();
        Ok(VitEncoder {
            cfg: cfg.clone(),
            patch_proj: Linear::new(patch_len, dim, rng),
            cls_token,
            pos,
            blocks,
            final_norm: LayerNorm::new(dim),
        })
    }

    /// Flattens non-overlapping patches, projects to the embedding width,
    /// prepends the learned CLS token and adds the fixed position table.
    pub fn patchify_embed(&self, image: &Image2D) -> Result<TokenMatrix<E>> {
        let cfg = &self.cfg;
        if image.width() != cfg.image_size || image.height() != cfg.image_size {
            return Err(BackboneError::Dimension(format!(
                "image {}×{} does not match configured size {}",
                image.width(),
                image.height(),
                cfg.image_size
            )));
        }
        let p = cfg.patch_size;
        let side = cfg.patches_per_side();
        let mut patches = Vec::with_capacity(cfg.num_patches() * p * p);
        for py in 0..side {
            for px in 0..side {
                for dy in 0..p {
                    for dx in 0..p {
                        patches.push(E::from_f64(image.get(px * p + dx, py * p + dy)));
                    }
                }
            }
        }
        let patch_mat = Tensor::from_vec(&[cfg.num_patches(), p * p], patches)?;
        let mut embedded = self.patch_proj.forward(&patch_mat)?;
        if cfg.pos_embed {
            embedded = embedded.add(&self.pos)?;
        }
        let tokens = Tensor::concat_rows(&[&self.cls_token, &embedded])?;
        TokenMatrix::new(tokens)
    }

    /// Pre-norm encoder stack ending in a final LayerNorm. The encoder has
    /// no mode-dependent layers, so train and eval compute identically;
    /// the mode is part of the call contract for checkpoint-compatible
    /// frontends.
    pub fn encoder_forward(&self, tokens: &TokenMatrix<E>, _mode: Mode) -> Result<TokenMatrix<E>> {
        if tokens.num_tokens() != self.cfg.num_tokens() || tokens.dim() != self.cfg.embed_dim {
            return Err(BackboneError::Dimension(format!(
                "tokens {}×{} do not match config {}×{}",
                tokens.num_tokens(),
                tokens.dim(),
                self.cfg.num_tokens(),
                self.cfg.embed_dim
            )));
        }
        let mut x = tokens.tensor().clone();
        for (i, block) in self.blocks.iter().enumerate() {
            x = block.forward(&x)?;
            x.assert_finite(&format!("encoder.block{i}"))
                .map_err(BackboneError::Tensor)?;
        }
        let x = self.final_norm.forward(&x)?;
        TokenMatrix::new(x)
    }

    /// patchify + encode.
    pub fn forward_image(&self, image: &Image2D, mode: Mode) -> Result<TokenMatrix<E>> {
        self.encoder_forward(&self.patchify_embed(image)?, mode)
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = vec![
            (
                "encoder.patch.w".to_string(),
                self.patch_proj.weight.clone(),
            ),
            ("encoder.patch.b".to_string(), self.patch_proj.bias.clone()),
            ("encoder.cls".to_string(), self.cls_token.clone()),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(b.named_params(&format!("encoder.block{i}")));
        }
        out.extend(self.final_norm.named_params("encoder.norm"));
        out
    }
}
