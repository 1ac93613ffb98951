//! Experiment configuration: one JSON document with per-stage sections.

use std::path::{Path, PathBuf};

use mfvit_backbone::FinetuneConfig;
use mfvit_fusion::FusionTrainConfig;
use mfvit_moco::MocoConfig;
use mfvit_phase::{AugmentConfig, EnhanceConfig};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetConfig {
    /// Directory holding `manifest.csv`; image paths are relative to it.
    pub root: PathBuf,
    /// Where enhanced images live; defaults to `<out_dir>/enhanced`.
    #[serde(default)]
    pub enhanced_root: Option<PathBuf>,
    /// When set, the synth-data stage generates the dataset into `root`.
    pub synthetic: Option<SynthConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EnhanceStageConfig {
    pub params: EnhanceConfig,
    pub emit_intermediates: bool,
    pub emit_png: bool,
}

impl Default for EnhanceStageConfig {
    fn default() -> Self {
        EnhanceStageConfig {
            params: EnhanceConfig::default(),
            emit_intermediates: false,
            emit_png: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FinetuneStageConfig {
    pub train: FinetuneConfig,
    pub label_fractions: Vec<f64>,
    pub repeats: usize,
    /// Single-branch methods: {cxr,enh}-{lp,ft} plus the *-lp-random
    /// frozen-random-encoder baselines.
    pub methods: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FusionStageConfig {
    pub train: FusionTrainConfig,
    /// Fusion methods: mf-lp and/or mf-ca.
    pub methods: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalStageConfig {
    pub splits: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SeedsConfig {
    pub master: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub stages: Vec<String>,
    pub dataset: DatasetConfig,
    pub enhance: EnhanceStageConfig,
    pub pretrain: MocoConfig,
    pub finetune: FinetuneStageConfig,
    pub fusion: FusionStageConfig,
    pub eval: EvalStageConfig,
    pub seeds: SeedsConfig,
    pub threads: usize,
}

pub const ALL_STAGES: [&str; 7] = [
    "synth-data",
    "enhance",
    "pretrain",
    "finetune",
    "fuse-train",
    "eval",
    "report",
];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.stages {
            if !ALL_STAGES.contains(&s.as_str()) {
                return Err(PipelineError::Config(format!(
                    "unknown stage {s:?}; valid stages: {ALL_STAGES:?}"
                )));
            }
        }
        for m in &self.finetune.methods {
            parse_branch_method(m)?;
        }
        for m in &self.fusion.methods {
            if m != "mf-lp" && m != "mf-ca" {
                return Err(PipelineError::Config(format!(
                    "unknown fusion method {m:?} (expected mf-lp or mf-ca)"
                )));
            }
        }
        for f in &self.finetune.label_fractions {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(PipelineError::Config(format!(
                    "label fraction {f} outside (0, 1]"
                )));
            }
        }
        if self.finetune.repeats == 0 {
            return Err(PipelineError::Config("repeats must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Full-preset defaults (ViT-S, 512-pixel enhancement grid, paper
    /// schedules).
    pub fn full(out_dir: PathBuf, data_root: PathBuf) -> Self {
        ExperimentConfig {
            out_dir,
            stages: ALL_STAGES.iter().map(|s| s.to_string()).collect(),
            dataset: DatasetConfig {
                root: data_root,
                enhanced_root: None,
                synthetic: None,
            },
            enhance: EnhanceStageConfig::default(),
            pretrain: MocoConfig::full(),
            finetune: FinetuneStageConfig {
                train: FinetuneConfig::default(),
                label_fractions: vec![0.0025, 0.01, 0.10, 0.30, 1.0],
                repeats: 5,
                methods: vec![
                    "cxr-lp".into(),
                    "enh-lp".into(),
                    "cxr-ft".into(),
                    "enh-ft".into(),
                ],
            },
            fusion: FusionStageConfig {
                train: FusionTrainConfig::default(),
                methods: vec!["mf-lp".into(), "mf-ca".into()],
            },
            eval: EvalStageConfig {
                splits: vec!["test1".into(), "test2".into()],
            },
            seeds: SeedsConfig { master: 2024 },
            threads: 1,
        }
    }

    /// Seed-fixed desk-scale experiment: synthetic data, toy network, a
    /// few minutes single-threaded.
    pub fn toy(out_dir: PathBuf) -> Self {
        let data_root = out_dir.join("data");
        let mut pretrain = MocoConfig::toy();
        pretrain.epochs = 15;
        pretrain.warmup_epochs = 1;
        pretrain.batch_size = 16;
        pretrain.queue_size = 32;
        pretrain.lr = 5e-3;

        let mut enhance = EnhanceStageConfig::default();
        enhance.params.working_grid = 64;
        enhance.params.base_wavelength = 8.0;

        ExperimentConfig {
            out_dir,
            stages: ALL_STAGES.iter().map(|s| s.to_string()).collect(),
            dataset: DatasetConfig {
                root: data_root,
                enhanced_root: None,
                synthetic: Some(SynthConfig {
                    n_per_class: 30,
                    test2_per_class: 6,
                    ..SynthConfig::default()
                }),
            },
            enhance,
            pretrain,
            finetune: FinetuneStageConfig {
                train: FinetuneConfig {
                    epochs: 24,
                    batch_size: 16,
                    base_lr: 0.05,
                    min_lr: 0.0,
                    momentum: 0.9,
                    weight_decay: 0.0,
                    augment: Some(AugmentConfig::default()),
                    reinit_head: true,
                },
                label_fractions: vec![0.5, 1.0],
                repeats: 5,
                methods: vec![
                    "cxr-lp".into(),
                    "cxr-lp-random".into(),
                    "cxr-ft".into(),
                    "enh-ft".into(),
                ],
            },
            fusion: FusionStageConfig {
                train: FusionTrainConfig {
                    epochs: 30,
                    batch_size: 16,
                    base_lr: 0.05,
                    min_lr: 0.0,
                    momentum: 0.9,
                    weight_decay: 0.0,
                    augment: Some(AugmentConfig::default()),
                    unfreeze_branches: false,
                },
                methods: vec!["mf-lp".into(), "mf-ca".into()],
            },
            eval: EvalStageConfig {
                splits: vec!["test1".into(), "test2".into()],
            },
            seeds: SeedsConfig { master: 2024 },
            threads: 1,
        }
    }
}

/// Splits a branch-method id into (features, protocol, random_encoder).
pub fn parse_branch_method(method: &str) -> Result<(&str, &str, bool)> {
    let (base, random) = match method.strip_suffix("-random") {
        Some(base) => (base, true),
        None => (method, false),
    };
    let Some((features, protocol)) = base.split_once('-') else {
        return Err(PipelineError::Config(format!(
            "unknown method {method:?}; expected {{cxr|enh}}-{{lp|ft}}[-random]"
        )));
    };
    if !matches!(features, "cxr" | "enh") || !matches!(protocol, "lp" | "ft") {
        return Err(PipelineError::Config(format!(
            "unknown method {method:?}; expected {{cxr|enh}}-{{lp|ft}}[-random]"
        )));
    }
    if random && protocol != "lp" {
        return Err(PipelineError::Config(format!(
            "random-encoder baseline only makes sense for lp, got {method:?}"
        )));
    }
    Ok((features, protocol, random))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_config_roundtrips_through_json() {
        let cfg = ExperimentConfig::toy(PathBuf::from("/tmp/run"));
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
        cfg.validate().unwrap();
    }

    #[test]
    fn method_parsing() {
        assert_eq!(parse_branch_method("cxr-lp").unwrap(), ("cxr", "lp", false));
        assert_eq!(parse_branch_method("enh-ft").unwrap(), ("enh", "ft", false));
        assert_eq!(
            parse_branch_method("cxr-lp-random").unwrap(),
            ("cxr", "lp", true)
        );
        assert!(parse_branch_method("cxr-ft-random").is_err());
        assert!(parse_branch_method("dog-lp").is_err());
    }

    #[test]
    fn bad_stage_names_are_rejected() {
        let mut cfg = ExperimentConfig::toy(PathBuf::from("/tmp/run"));
        cfg.stages = vec!["train-everything".into()];
        assert!(cfg.validate().is_err());
    }
}
