//! Experiment orchestration: dataset manifests with patient-disjoint
//! splits, label-fraction subsampling, the enhance → pretrain → finetune
//! → fuse → eval stage graph, metrics, paired t-tests and report
//! emission.

pub mod config;
mod error;
pub mod experiment;
pub mod manifest;
pub mod metrics;
pub mod sampling;
pub mod stages;
pub mod stats;
pub mod synth;

pub use config::{parse_branch_method, ExperimentConfig};
pub use error::{PipelineError, Result};
pub use experiment::{build_report, run_experiment, stage_report, SummaryCell, SummaryReport};
pub use manifest::{ClassLabel, ManifestRow, RunManifest, Split, NUM_CLASSES};
pub use metrics::{evaluate_predictions, ClassMetrics, EvalReport};
pub use sampling::sample_label_fraction;
pub use stats::{paired_t_test, reg_inc_beta, TTestResult};
pub use synth::{make_synthetic_dataset, SynthConfig};
