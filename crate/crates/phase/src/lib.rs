//! Local-phase image enhancement for chest radiographs: a monogenic
//! quadrature filter bank, the LwPA/LPE/ELEA feature images and their MF
//! fusion, plus the geometric augmentations used during training.
//!
//! All operations are pure functions of their inputs; the filter bank is
//! immutable after construction and shareable across threads.

pub mod augment;
pub mod elea;
mod enhance;
mod error;
pub mod features;
pub mod fft;
pub mod filterbank;
mod image;
pub mod io;
pub mod monogenic;

pub use augment::{augment, resize_bilinear, AugmentConfig};
pub use elea::{elea, soft_threshold, EleaParams, EleaSolver};
pub use enhance::{enhance_image, enhance_on_grid, mf_combine, EnhanceConfig, EnhancedImage};
pub use error::{PhaseError, Result};
pub use features::{lpe, lwpa};
pub use filterbank::{build_filter_bank, FilterBank};
pub use image::Image2D;
pub use monogenic::{monogenic_responses, MonogenicResponses};
