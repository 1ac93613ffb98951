//! Dataset manifests with patient-disjoint splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Normal,
    Pneumonia,
    Covid,
}

pub const NUM_CLASSES: usize = 3;

impl ClassLabel {
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Normal => 0,
            ClassLabel::Pneumonia => 1,
            ClassLabel::Covid => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(ClassLabel::Normal),
            1 => Some(ClassLabel::Pneumonia),
            2 => Some(ClassLabel::Covid),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Normal => "normal",
            ClassLabel::Pneumonia => "pneumonia",
            ClassLabel::Covid => "covid",
        }
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(ClassLabel::Normal),
            "pneumonia" => Ok(ClassLabel::Pneumonia),
            "covid" | "covid-19" | "covid19" => Ok(ClassLabel::Covid),
            other => Err(PipelineError::Parse(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test1,
    Test2,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test1 => "test1",
            Split::Test2 => "test2",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test1" => Ok(Split::Test1),
            "test2" => Ok(Split::Test2),
            other => Err(PipelineError::Parse(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub path: PathBuf,
    pub label: ClassLabel,
    pub patient_id: String,
    pub split: Split,
}

#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    rows: Vec<ManifestRow>,
}

impl RunManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        let manifest = RunManifest { rows };
        manifest.validate()?;
        Ok(manifest)
    }

    /// CSV with header `path,label,patient_id,split`; validation runs on
    /// every load, not just at creation.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        {
            let headers = reader.headers()?;
            let expected = ["path", "label", "patient_id", "split"];
            let got: Vec<&str> = headers.iter().collect();
            if got != expected {
                return Err(PipelineError::Parse(format!(
                    "manifest header {got:?} must be {expected:?}"
                )));
            }
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != 4 {
                return Err(PipelineError::Parse(format!(
                    "manifest row has {} fields, expected 4",
                    record.len()
                )));
            }
            rows.push(ManifestRow {
                path: PathBuf::from(&record[0]),
                label: record[1].parse()?,
                patient_id: record[2].to_string(),
                split: record[3].parse()?,
            });
        }
        if rows.is_empty() {
            return Err(PipelineError::Parse(format!(
                "manifest {} has no data rows",
                path.display()
            )));
        }
        Self::new(rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("path,label,patient_id,split\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.path.display(),
                r.label.name(),
                r.patient_id,
                r.split.name()
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Duplicate paths are rejected; no patient may appear in more than
    /// one of {train, val, test1}.
    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(PipelineError::Validation("manifest is empty".into()));
        }
        let mut seen_paths = HashSet::new();
        for r in &self.rows {
            if !seen_paths.insert(&r.path) {
                return Err(PipelineError::Validation(format!(
                    "duplicate path {}",
                    r.path.display()
                )));
            }
        }
        let mut patient_splits: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
        for r in &self.rows {
            if matches!(r.split, Split::Train | Split::Val | Split::Test1) {
                patient_splits
                    .entry(r.patient_id.as_str())
                    .or_default()
                    .insert(r.split);
            }
        }
        let offenders: Vec<String> = patient_splits
            .iter()
            .filter(|(_, splits)| splits.len() > 1)
            .map(|(id, splits)| {
                let names: Vec<&str> = splits.iter().map(|s| s.name()).collect();
                format!("{id} ({})", names.join(", "))
            })
            .collect();
        if !offenders.is_empty() {
            return Err(PipelineError::Validation(format!(
                "patients appear in multiple splits: {}",
                offenders.join("; ")
            )));
        }
        Ok(())
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn split_rows(&self, split: Split) -> Vec<&ManifestRow> {
        self.rows.iter().filter(|r| r.split == split).collect()
    }

    pub fn split_count(&self, split: Split) -> usize {
        self.rows.iter().filter(|r| r.split == split).count()
    }
}
