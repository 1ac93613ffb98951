use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("manifest validation failed: {0}")]
    Validation(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("missing dependency for stage {stage}: {what}")]
    Dependency { stage: String, what: String },
    #[error(transparent)]
    Tensor(#[from] mfvit_tensor::TensorError),
    #[error(transparent)]
    Checkpoint(#[from] mfvit_tensor::checkpoint::CheckpointError),
    #[error(transparent)]
    Phase(#[from] mfvit_phase::PhaseError),
    #[error(transparent)]
    Backbone(#[from] mfvit_backbone::BackboneError),
    #[error(transparent)]
    Moco(#[from] mfvit_moco::MocoError),
    #[error(transparent)]
    Fusion(#[from] mfvit_fusion::FusionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;
