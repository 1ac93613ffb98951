//! CLS-to-patch cross-attention between the two branches.
//!
//! The query comes from one branch's CLS token only; keys and values come
//! from that CLS token concatenated with the *other* branch's patch
//! tokens. Per head the projections are C×(C/h); head outputs concatenate
//! straight back to width C with no output projection.

use mfvit_backbone::TokenMatrix;
use mfvit_tensor::{Element, Tensor};
use rand::Rng;

use crate::error::{FusionError, Result};

pub struct CrossAttentionParams<E: Element> {
    pub heads: usize,
    pub dim: usize,
    pub wq: Vec<Tensor<E>>,
    pub wk: Vec<Tensor<E>>,
    pub wv: Vec<Tensor<E>>,
}

impl<E: Element> CrossAttentionParams<E> {
    /// Uniform ±1/√C initialization.
    pub fn new(dim: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(FusionError::Config(format!(
                "embed dim {dim} must be divisible by {heads} heads"
            )));
        }
        let head_dim = dim / heads;
        let bound = 1.0 / (dim as f64).sqrt();
        let mk = |rng: &mut dyn rand::RngCore| -> Vec<Tensor<E>> {
            (0..heads)
                .map(|_| {
                    Tensor::param(
                        &[dim, head_dim],
                        (0..dim * head_dim)
                            .map(|_| E::from_f64(rng.gen_range(-bound..bound)))
                            .collect(),
                    )
                    .expect("sized")
                })
                .collect()
        };
        Ok(CrossAttentionParams {
            heads,
            dim,
            wq: mk(rng),
            wk: mk(rng),
            wv: mk(rng),
        })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        for h in 0..self.heads {
            out.push((format!("{prefix}.h{h}.wq"), self.wq[h].clone()));
            out.push((format!("{prefix}.h{h}.wk"), self.wk[h].clone()));
            out.push((format!("{prefix}.h{h}.wv"), self.wv[h].clone()));
        }
        out
    }

    /// Zeroes every projection; the block then reduces to the identity.
    pub fn zero(&self) {
        for t in self.wq.iter().chain(&self.wk).chain(&self.wv) {
            for v in t.value_mut().iter_mut() {
                *v = E::zero();
            }
        }
    }
}

/// Cross-attention with the per-head attention rows returned for probing.
pub fn cross_attend_with_attn<E: Element>(
    cls_a: &Tensor<E>,
    patches_b: &Tensor<E>,
    params: &CrossAttentionParams<E>,
) -> Result<(Tensor<E>, Vec<Tensor<E>>)> {
    if !cls_a.is_matrix() || cls_a.rows() != 1 || cls_a.cols() != params.dim {
        return Err(FusionError::Dimension(format!(
            "cls must be 1×{}, got {:?}",
            params.dim,
            cls_a.shape()
        )));
    }
    if !patches_b.is_matrix() || patches_b.cols() != params.dim {
        return Err(FusionError::Dimension(format!(
            "patch tokens must be P×{}, got {:?}",
            params.dim,
            patches_b.shape()
        )));
    }
    // x' = [cls_a ∥ patches_b]
    let x = Tensor::concat_rows(&[cls_a, patches_b])?;
    // scaled dot product over D = C
    let scale = E::from_f64(1.0 / (params.dim as f64 / params.heads as f64).sqrt());
    let mut heads = Vec::with_capacity(params.heads);
    let mut attns = Vec::with_capacity(params.heads);
    for h in 0..params.heads {
        let q = cls_a.matmul(&params.wq[h])?;
        let k = x.matmul(&params.wk[h])?;
        let v = x.matmul(&params.wv[h])?;
        let attn = q.matmul(&k.transpose()?)?.scale(scale).softmax(1)?;
        heads.push(attn.matmul(&v)?);
        attns.push(attn);
    }
    let refs: Vec<&Tensor<E>> = heads.iter().collect();
    Ok((Tensor::concat_cols(&refs)?, attns))
}

/// CA(cls_a, patches_b): 1×C.
pub fn cross_attend<E: Element>(
    cls_a: &Tensor<E>,
    patches_b: &Tensor<E>,
    params: &CrossAttentionParams<E>,
) -> Result<Tensor<E>> {
    Ok(cross_attend_with_attn(cls_a, patches_b, params)?.0)
}

/// The two directional cross-attention units.
pub struct CaBlock<E: Element> {
    /// CXR CLS attends over Enh patches.
    pub cxr: CrossAttentionParams<E>,
    /// Enh CLS attends over CXR patches.
    pub enh: CrossAttentionParams<E>,
}

impl<E: Element> CaBlock<E> {
    pub fn new(dim: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(CaBlock {
            cxr: CrossAttentionParams::new(dim, heads, rng)?,
            enh: CrossAttentionParams::new(dim, heads, rng)?,
        })
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = self.cxr.named_params("ca.cxr");
        out.extend(self.enh.named_params("ca.enh"));
        out
    }
}

/// Per branch: y_cls = x_cls + CA(x_cls, other patches), then
/// z = [y_cls ∥ x_patch] — patch rows pass through untouched.
pub fn ca_block_forward<E: Element>(
    tokens_cxr: &TokenMatrix<E>,
    tokens_enh: &TokenMatrix<E>,
    block: &CaBlock<E>,
) -> Result<(TokenMatrix<E>, TokenMatrix<E>)> {
    if tokens_cxr.num_tokens() != tokens_enh.num_tokens() || tokens_cxr.dim() != tokens_enh.dim() {
        return Err(FusionError::Dimension(format!(
            "branch token geometry differs: {}×{} vs {}×{}",
            tokens_cxr.num_tokens(),
            tokens_cxr.dim(),
            tokens_enh.num_tokens(),
            tokens_enh.dim()
        )));
    }
    let out_cxr = {
        let cls = tokens_cxr.cls();
        let ca = cross_attend(&cls, &tokens_enh.patches(), &block.cxr)?;
        let y_cls = cls.add(&ca)?;
        TokenMatrix::new(Tensor::concat_rows(&[&y_cls, &tokens_cxr.patches()])?)?
    };
    let out_enh = {
        let cls = tokens_enh.cls();
        let ca = cross_attend(&cls, &tokens_cxr.patches(), &block.enh)?;
        let y_cls = cls.add(&ca)?;
        TokenMatrix::new(Tensor::concat_rows(&[&y_cls, &tokens_enh.patches()])?)?
    };
    Ok((out_cxr, out_enh))
}
