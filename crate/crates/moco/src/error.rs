use thiserror::Error;

#[derive(Debug, Error)]
pub enum MocoError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Tensor(#[from] mfvit_tensor::TensorError),
    #[error(transparent)]
    Backbone(#[from] mfvit_backbone::BackboneError),
    #[error(transparent)]
    Phase(#[from] mfvit_phase::PhaseError),
    #[error(transparent)]
    Checkpoint(#[from] mfvit_tensor::checkpoint::CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MocoError>;
