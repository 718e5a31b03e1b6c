//! Seeded synthetic datasets and CSV ingestion.

mod csv;
mod synth;

use serde::{Deserialize, Serialize};

pub use self::csv::{load_csv, save_csv};
pub use synth::{class_stats, gen_blobs, gen_ood, stratified_split, BlobsParams, ClassStats, OodKind, OodSpec};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    IdTrain,
    IdTest,
    Ood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
    pub role: Role,
}

impl Dataset {
    /// Validates uniform feature width and label count.
    pub fn new(
        name: impl Into<String>,
        features: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
        role: Role,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            features,
            labels,
            role,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if let Some(i) = self.features.iter().position(|f| f.len() != d) {
            return Err(invalid(format!(
                "{}: sample {i} has {} features, expected {d}",
                self.name,
                self.features[i].len()
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.features.len() {
                return Err(invalid(format!("{}: label count differs from sample count", self.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// `max label + 1`, or `None` for unlabeled data.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Rows grouped by label; unlabeled data forms one group.
    pub fn by_class(&self) -> Vec<Vec<Vec<f64>>> {
        match &self.labels {
            None => vec![self.features.clone()],
            Some(labels) => {
                let k = self.num_classes().unwrap_or(0);
                let mut groups = vec![Vec::new(); k];
                for (f, &y) in self.features.iter().zip(labels) {
                    groups[y].push(f.clone());
                }
                groups
            }
        }
    }
}

/// Sidecar describing how a dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub kind: String,
    pub params: serde_json::Value,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
}
