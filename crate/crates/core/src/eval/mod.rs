//! Detection metrics, activation statistics and report assembly.

mod metrics;

pub use metrics::{
    activation_entropy, auroc, average_ranks, fpr95, fpr95_threshold, mean_sparsity, spearman,
    EntropyProfile, SPARSITY_CAP, TPR_TARGET,
};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::net::MlpModel;
use crate::scores::{last_hidden_features, score_many, BankIndex, ScoreKind};
use crate::train::accuracy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub name: String,
    pub ood_set: String,
    /// ID test set against the OOD set.
    pub auroc: f64,
    pub fpr95: f64,
    /// ID training set against the same OOD set.
    pub train_auroc: f64,
}

impl ScoreEntry {
    /// `train_auroc − auroc`
    pub fn generalization_gap(&self) -> f64 {
        self.train_auroc - self.auroc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` when the ID test set is unlabeled or the head has a different class count.
    pub id_accuracy: Option<f64>,
    /// Over `a^(L)` of the ID test set.
    pub mean_activation_entropy: f64,
    pub mean_sparsity: f64,
    pub scores: Vec<ScoreEntry>,
}

impl EvalReport {
    pub fn entry(&self, name: &str, ood_set: &str) -> Option<&ScoreEntry> {
        self.scores
            .iter()
            .find(|e| e.name == name && e.ood_set == ood_set)
    }
}

/// Scores `id_train`, `id_test` and every OOD set once per kind, then fills the report.
pub fn build_report(
    model: &MlpModel,
    id_train: &Dataset,
    id_test: &Dataset,
    ood_sets: &[Dataset],
    kinds: &[ScoreKind],
    bank: Option<&BankIndex>,
) -> Result<EvalReport> {
    if id_train.is_empty() || id_test.is_empty() {
        return Err(invalid("ID train and test sets must be non-empty"));
    }
    let train_scores = score_many(model, &id_train.features, kinds, bank)?;
    let test_scores = score_many(model, &id_test.features, kinds, bank)?;
    let mut scores = Vec::with_capacity(kinds.len() * ood_sets.len());
    for ood in ood_sets {
        let ood_scores = score_many(model, &ood.features, kinds, bank)?;
        for (j, kind) in kinds.iter().enumerate() {
            scores.push(ScoreEntry {
                name: kind.to_string(),
                ood_set: ood.name.clone(),
                auroc: auroc(&test_scores[j], &ood_scores[j])?,
                fpr95: fpr95(&test_scores[j], &ood_scores[j])?,
                train_auroc: auroc(&train_scores[j], &ood_scores[j])?,
            });
        }
    }
    let acts = last_hidden_features(model, &id_test.features)?;
    let id_accuracy = match (&id_test.labels, id_test.num_classes()) {
        (Some(labels), Some(k)) if k <= model.num_classes() => {
            Some(accuracy(model, &id_test.features, labels)?)
        }
        _ => None,
    };
    Ok(EvalReport {
        id_accuracy,
        mean_activation_entropy: activation_entropy(&acts)?.mean,
        mean_sparsity: mean_sparsity(&acts)?,
        scores,
    })
}
