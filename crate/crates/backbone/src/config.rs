//! Transformer geometry presets.

use serde::{Deserialize, Serialize};

use crate::error::{BackboneError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VitConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub num_heads: usize,
    pub mlp_ratio: usize,
    pub num_classes: usize,
    /// Fixed sine-cosine positional embedding; disable to probe
    /// permutation equivariance.
    pub pos_embed: bool,
}

impl VitConfig {
    /// ViT-S geometry with 6 heads: 224/16 → 197 tokens of width 384.
    pub fn vit_small() -> Self {
        VitConfig {
            image_size: 224,
            patch_size: 16,
            embed_dim: 384,
            depth: 12,
            num_heads: 6,
            mlp_ratio: 4,
            num_classes: 3,
            pos_embed: true,
        }
    }

    /// Desk-scale preset: 32/8 → 17 tokens of width 48.
    pub fn toy() -> Self {
        VitConfig {
            image_size: 32,
            patch_size: 8,
            embed_dim: 48,
            depth: 2,
            num_heads: 3,
            mlp_ratio: 4,
            num_classes: 3,
            pos_embed: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.image_size % self.patch_size != 0 {
            return Err(BackboneError::Config(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.num_heads == 0 || self.embed_dim % self.num_heads != 0 {
            return Err(BackboneError::Config(format!(
                "embed_dim {} not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if self.pos_embed && self.embed_dim % 4 != 0 {
            return Err(BackboneError::Config(format!(
                "sine-cosine positions need embed_dim divisible by 4, got {}",
                self.embed_dim
            )));
        }
        if self.depth == 0 || self.num_classes < 2 {
            return Err(BackboneError::Config(
                "depth must be ≥ 1 and num_classes ≥ 2".into(),
            ));
        }
        Ok(())
    }

    pub fn patches_per_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.patches_per_side() * self.patches_per_side()
    }

    pub fn num_tokens(&self) -> usize {
        1 + self.num_patches()
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_token_geometry() {
        assert_eq!(VitConfig::vit_small().num_tokens(), 197);
        assert_eq!(VitConfig::vit_small().embed_dim, 384);
        assert_eq!(VitConfig::toy().num_tokens(), 17);
        assert_eq!(VitConfig::toy().embed_dim, 48);
        VitConfig::vit_small().validate().unwrap();
        VitConfig::toy().validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_geometry() {
        let mut cfg = VitConfig::toy();
        cfg.patch_size = 7;
        assert!(cfg.validate().is_err());
        let mut cfg = VitConfig::toy();
        cfg.num_heads = 5;
        assert!(cfg.validate().is_err());
    }
}
