//! End-to-end experiment runner and the summary report.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{PipelineError, Result};
use crate::metrics::EvalReport;
use crate::stages;
use crate::stats::{paired_t_test, TTestResult};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SummaryCell {
    pub method: String,
    pub fraction: f64,
    pub split: String,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SummaryTTest {
    pub method_a: String,
    pub method_b: String,
    pub fraction: f64,
    pub split: String,
    #[serde(flatten)]
    pub result: TTestResult,
}

/// The experiment grid laid out as methods × label fractions × test
/// splits, with pairwise significance tests over the repeat vectors.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SummaryReport {
    pub schema_version: u32,
    pub methods: Vec<String>,
    pub fractions: Vec<f64>,
    pub splits: Vec<String>,
    pub repeats: usize,
    pub cells: Vec<SummaryCell>,
    pub ttests: Vec<SummaryTTest>,
}

impl SummaryReport {
    pub fn cell(&self, method: &str, fraction: f64, split: &str) -> Option<&SummaryCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.fraction == fraction && c.split == split)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Collects the per-repeat metrics written by the eval stage into the
/// summary table. Every cell must be complete — a missing metrics file is
/// a dependency error, never a silent omission.
pub fn build_report(cfg: &ExperimentConfig) -> Result<SummaryReport> {
    let methods = stages::all_methods(cfg);
    let mut cells = Vec::new();
    for method in &methods {
        for &fraction in &cfg.finetune.label_fractions {
            for split in &cfg.eval.splits {
                let mut accuracies = Vec::with_capacity(cfg.finetune.repeats);
                let mut f1s = Vec::with_capacity(cfg.finetune.repeats);
                for repeat in 0..cfg.finetune.repeats {
                    let path = stages::metrics_path(cfg, method, fraction, repeat, split);
                    if !path.exists() {
                        return Err(PipelineError::Dependency {
                            stage: "report".into(),
                            what: format!("metrics file {}", path.display()),
                        });
                    }
                    let report: EvalReport =
                        serde_json::from_str(&std::fs::read_to_string(&path)?)?;
                    accuracies.push(report.accuracy);
                    f1s.push(report.macro_f1);
                }
                let (mean_accuracy, std_accuracy) = mean_std(&accuracies);
                let (mean_macro_f1, _) = mean_std(&f1s);
                cells.push(SummaryCell {
                    method: method.clone(),
                    fraction,
                    split: split.clone(),
                    accuracies,
                    mean_accuracy,
                    std_accuracy,
                    mean_macro_f1,
                });
            }
        }
    }

    let mut ttests = Vec::new();
    if cfg.finetune.repeats >= 2 {
        for i in 0..methods.len() {
            for j in (i + 1)..methods.len() {
                for &fraction in &cfg.finetune.label_fractions {
                    for split in &cfg.eval.splits {
                        let a = cells
                            .iter()
                            .find(|c| {
                                c.method == methods[i]
                                    && c.fraction == fraction
                                    && &c.split == split
                            })
                            .expect("cell built above");
                        let b = cells
                            .iter()
                            .find(|c| {
                                c.method == methods[j]
                                    && c.fraction == fraction
                                    && &c.split == split
                            })
                            .expect("cell built above");
                        ttests.push(SummaryTTest {
                            method_a: methods[i].clone(),
                            method_b: methods[j].clone(),
                            fraction,
                            split: split.clone(),
                            result: paired_t_test(&a.accuracies, &b.accuracies)?,
                        });
                    }
                }
            }
        }
    }

    Ok(SummaryReport {
        schema_version: 1,
        methods,
        fractions: cfg.finetune.label_fractions.clone(),
        splits: cfg.eval.splits.clone(),
        repeats: cfg.finetune.repeats,
        cells,
        ttests,
    })
}

pub fn summary_csv(report: &SummaryReport) -> String {
    let mut out = String::from("method,fraction,split,mean_accuracy,std_accuracy,mean_macro_f1\n");
    for c in &report.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.method, c.fraction, c.split, c.mean_accuracy, c.std_accuracy, c.mean_macro_f1
        ));
    }
    out
}

pub fn stage_report(cfg: &ExperimentConfig) -> Result<SummaryReport> {
    let report = build_report(cfg)?;
    let expected = report.methods.len() * report.fractions.len() * report.splits.len();
    debug_assert_eq!(report.cells.len(), expected);
    std::fs::write(
        cfg.out_dir.join("summary.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    std::fs::write(cfg.out_dir.join("summary.csv"), summary_csv(&report))?;
    Ok(report)
}

/// Executes the configured stage list in order and returns the run
/// directory. The resolved config is copied into the run directory first.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    cfg.save(&cfg.out_dir.join("config.json"))?;
    for stage in &cfg.stages {
        match stage.as_str() {
            "synth-data" => stages::stage_synth(cfg)?,
            "enhance" => {
                stages::stage_enhance(cfg)?;
            }
            "pretrain" => stages::stage_pretrain(cfg)?,
            "finetune" => stages::stage_finetune(cfg)?,
            "fuse-train" => stages::stage_fuse(cfg)?,
            "eval" => stages::stage_eval(cfg)?,
            "report" => {
                stage_report(cfg)?;
            }
            other => {
                return Err(PipelineError::Config(format!("unknown stage {other:?}")));
            }
        }
    }
    Ok(cfg.out_dir.clone())
}
