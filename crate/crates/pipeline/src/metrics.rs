//! Confusion-matrix metrics.

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::manifest::NUM_CLASSES;

pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub schema_version: u32,
    pub total: usize,
    /// confusion[actual][predicted]
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Classes with no actual or no predicted samples, whose metrics were
    /// forced to 0.
    pub degenerate_classes: Vec<usize>,
}

/// accuracy = trace/total; per-class precision = diag/colsum,
/// recall = diag/rowsum, F1 = harmonic mean (0 when undefined).
pub fn evaluate_predictions(actual: &[usize], predicted: &[usize]) -> Result<EvalReport> {
    if actual.is_empty() || actual.len() != predicted.len() {
        return Err(PipelineError::Config(format!(
            "evaluation needs matching nonempty label lists, got {}/{}",
            actual.len(),
            predicted.len()
        )));
    }
    let mut confusion = vec![vec![0usize; NUM_CLASSES]; NUM_CLASSES];
    for (&a, &p) in actual.iter().zip(predicted) {
        if a >= NUM_CLASSES || p >= NUM_CLASSES {
            return Err(PipelineError::Config(format!(
                "class index out of range: actual {a}, predicted {p}"
            )));
        }
        confusion[a][p] += 1;
    }
    let total = actual.len();
    let trace: usize = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
    let accuracy = trace as f64 / total as f64;

    let mut per_class = Vec::with_capacity(NUM_CLASSES);
    let mut degenerate = Vec::new();
    for c in 0..NUM_CLASSES {
        let rowsum: usize = confusion[c].iter().sum();
        let colsum: usize = (0..NUM_CLASSES).map(|r| confusion[r][c]).sum();
        let diag = confusion[c][c] as f64;
        let precision = if colsum > 0 {
            diag / colsum as f64
        } else {
            0.0
        };
        let recall = if rowsum > 0 {
            diag / rowsum as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if rowsum == 0 || colsum == 0 {
            degenerate.push(c);
        }
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
        });
    }
    let macro_avg = |f: fn(&ClassMetrics) -> f64| -> f64 {
        per_class.iter().map(f).sum::<f64>() / NUM_CLASSES as f64
    };
    Ok(EvalReport {
        schema_version: METRICS_SCHEMA_VERSION,
        total,
        confusion,
        accuracy,
        per_class: per_class.clone(),
        macro_precision: macro_avg(|m| m.precision),
        macro_recall: macro_avg(|m| m.recall),
        macro_f1: macro_avg(|m| m.f1),
        degenerate_classes: degenerate,
    })
}

impl EvalReport {
    /// Confusion rows as CSV (actual × predicted).
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("actual\\predicted,normal,pneumonia,covid\n");
        for (c, row) in self.confusion.iter().enumerate() {
            let name = ["normal", "pneumonia", "covid"][c];
            out.push_str(&format!("{name},{},{},{}\n", row[0], row[1], row[2]));
        }
        out
    }
}
