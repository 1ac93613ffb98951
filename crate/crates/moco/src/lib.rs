//! MoCo-style self-supervised pretraining: two-view augmentation, a
//! query/momentum encoder pair with projection and prediction heads, a
//! FIFO representation queue, the InfoNCE objective and the momentum
//! cosine schedule.

mod config;
mod error;
mod loss;
mod model;
mod momentum;
mod pretrain;
mod queue;

pub use config::MocoConfig;
pub use error::{MocoError, Result};
pub use loss::{info_nce, info_nce_batch};
pub use model::{MocoModel, PredictionHead, ProjectionHead};
pub use momentum::{momentum_at, momentum_update};
pub use pretrain::{append_training_log, pretrain, two_view, EpochLog, PretrainResult};
pub use queue::RepresentationQueue;
