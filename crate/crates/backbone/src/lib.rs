//! ViT backbone: patch embedding, fixed sine-cosine positions, the
//! pre-norm encoder stack, the linear classifier head and the LP/FT
//! freeze policies.

mod classifier;
mod config;
mod error;
pub mod finetune;
mod pos_embed;
mod vit;

pub use classifier::{apply_freeze_policy, Classifier, Protocol};
pub use config::VitConfig;
pub use error::{BackboneError, Result};
pub use finetune::{train_classifier, FinetuneConfig};
pub use pos_embed::sincos_pos_embed;
pub use vit::{Block, SelfAttention, TokenMatrix, VitEncoder};
