//! Multi-feature fusion: dual-branch cross-attention over CXR and
//! enhanced-image encoders, plus hard-label distillation fine-tuning.

mod cross_attention;
mod distill;
mod error;
mod model;

pub use cross_attention::{
    ca_block_forward, cross_attend, cross_attend_with_attn, CaBlock, CrossAttentionParams,
};
pub use distill::{hard_distill_loss, teacher_labels, DistillBatch};
pub use error::{FusionError, Result};
pub use model::{train_fusion, FusionMode, FusionModel, FusionSample, FusionTrainConfig};
