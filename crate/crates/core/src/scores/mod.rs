//! OOD scores. Every score follows one convention: higher means more in-distribution.

mod bank;
mod kind;

pub use bank::{BankIndex, ClusterModel, DEFAULT_LABEL_FREE_CLUSTERS, DEFAULT_REACT_PERCENTILE};
pub use kind::{ScoreKind, DEFAULT_KNN_K};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::hidden::{coefficient_matrix, hidden_logits};
use crate::net::{forward, with_last_hidden, ForwardTrace, MlpModel};
use crate::numcore::{
    active_count, entropy, l1_norm, l2_norm, l2_normalized, logsumexp, lp_norm, softmax, sq_dist,
    GaussianModel,
};

/// Guard for dividing by a vanishing NAN in fusion.
pub const FUSION_EPS: f64 = 1e-12;

/// Negative-aware norm `‖a‖₁ / ‖a‖₀`: the mean of the active units, 0 when none is active.
pub fn nan_score(a: &[f64]) -> f64 {
    match active_count(a) {
        0 => 0.0,
        n => l1_norm(a) / n as f64,
    }
}

/// `1/‖a‖₀`, 0 when no unit is active.
pub fn inv_l0_score(a: &[f64]) -> f64 {
    match active_count(a) {
        0 => 0.0,
        n => 1.0 / n as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierScores {
    pub msp: f64,
    pub maxlogit: f64,
    pub energy: f64,
    /// `log K − H(softmax(ψ))`
    pub kl_uniform: f64,
}

pub fn classifier_scores(logits: &[f64]) -> ClassifierScores {
    let p = softmax(logits);
    ClassifierScores {
        msp: p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        maxlogit: logits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        energy: logsumexp(logits),
        kl_uniform: ((logits.len() as f64).ln() - entropy(&p)).max(0.0),
    }
}

/// `−min_k (f−μ_k)ᵀ Σ⁻¹ (f−μ_k)`
pub fn mahalanobis_score(f: &[f64], g: &GaussianModel) -> Result<f64> {
    if g.means.is_empty() {
        return Err(Error::InvalidState("Gaussian model has no means".into()));
    }
    if f.len() != g.dim() {
        return Err(invalid("feature and Gaussian dimensions differ"));
    }
    Ok(-g.min_distance_sq(f))
}

/// Negated distance from `f/‖f‖` to its `k`-th nearest normalized bank vector (exact search).
pub fn knn_score(f: &[f64], bank: &BankIndex, k: usize) -> Result<f64> {
    if k == 0 || k > bank.len() {
        return Err(invalid(format!("k = {k} but the bank has {} vectors", bank.len())));
    }
    if f.len() != bank.dim() {
        return Err(invalid("feature and bank dimensions differ"));
    }
    let q = l2_normalized(f);
    let mut d: Vec<f64> = bank.normalized_features().iter().map(|b| sq_dist(&q, b)).collect();
    let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(-kth.sqrt())
}

/// Negated smallest Mahalanobis distance to the bank's k-means clusters.
pub fn ssd_score(f: &[f64], bank: &BankIndex, clusters: usize) -> Result<f64> {
    let model = bank
        .clusters(clusters)
        .ok_or_else(|| Error::InvalidState(format!("bank has no {clusters}-cluster model")))?;
    if f.len() != bank.dim() {
        return Err(invalid("feature and bank dimensions differ"));
    }
    Ok(-model.min_distance_sq(f))
}

/// `−‖(I − PPᵀ)(f − mean)‖₂` for the bank's principal subspace of size `dim`.
pub fn residual_score(f: &[f64], bank: &BankIndex, dim: usize) -> Result<f64> {
    let sub = bank
        .pca(dim)
        .ok_or_else(|| Error::InvalidState(format!("bank has no {dim}-dimensional subspace")))?;
    if f.len() != bank.dim() {
        return Err(invalid("feature and bank dimensions differ"));
    }
    Ok(-sub.residual_norm(f))
}

/// Entrywise `min(a_i, c)`.
pub fn react_rectify(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|&x| x.min(c)).collect()
}

/// `distance_score / max(nan, ε)`; with `distance_score = −d` this is `−d / NAN`.
pub fn fuse_distance_nan(distance_score: f64, nan: f64) -> f64 {
    distance_score / nan.max(FUSION_EPS)
}

fn distance_score(kind: &ScoreKind, f: &[f64], bank: &BankIndex) -> Result<f64> {
    match kind {
        ScoreKind::Mahalanobis => {
            let g = bank
                .gaussian()
                .ok_or_else(|| Error::InvalidState("bank has no Gaussian model".into()))?;
            mahalanobis_score(f, g)
        }
        ScoreKind::Knn { k } => knn_score(f, bank, *k),
        ScoreKind::Ssd { clusters } => {
            ssd_score(f, bank, clusters.unwrap_or_else(|| bank.default_clusters()))
        }
        ScoreKind::Residual { dim } => {
            residual_score(f, bank, dim.unwrap_or_else(|| bank.default_residual_dim()))
        }
        other => Err(invalid(format!("`{other}` is not a distance score"))),
    }
}

fn require_bank<'b>(kind: &ScoreKind, bank: Option<&'b BankIndex>) -> Result<&'b BankIndex> {
    bank.ok_or_else(|| invalid(format!("score `{kind}` needs an ID feature bank")))
}

/// Score of one already-computed trace.
pub fn score_trace(
    model: &MlpModel,
    trace: &ForwardTrace,
    kind: &ScoreKind,
    bank: Option<&BankIndex>,
) -> Result<f64> {
    let a = trace.last_hidden();
    let s = match kind {
        ScoreKind::Msp => classifier_scores(&trace.logits).msp,
        ScoreKind::MaxLogit => classifier_scores(&trace.logits).maxlogit,
        ScoreKind::Energy => classifier_scores(&trace.logits).energy,
        ScoreKind::KlUniform => classifier_scores(&trace.logits).kl_uniform,
        ScoreKind::L1 => l1_norm(a),
        ScoreKind::Lp { p } => lp_norm(a, *p)?,
        ScoreKind::InvL0 => inv_l0_score(a),
        ScoreKind::Nan => nan_score(a),
        ScoreKind::EmbeddingMagnitude => l2_norm(&trace.embedding),
        ScoreKind::HiddenConfidence => {
            let hc = coefficient_matrix(model, trace, model.depth())?;
            hidden_logits(&hc, trace)?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        }
        ScoreKind::Fused(base) => {
            let d = distance_score(base, a, require_bank(kind, bank)?)?;
            fuse_distance_nan(d, nan_score(a))
        }
        ScoreKind::React(base) => {
            let c = require_bank(kind, bank)?
                .react_threshold()
                .ok_or_else(|| invalid("react needs a clipping threshold in the bank"))?;
            let clipped = with_last_hidden(model, trace, react_rectify(a, c));
            return score_trace(model, &clipped, base, bank);
        }
        d => distance_score(d, a, require_bank(kind, bank)?)?,
    };
    Ok(s)
}

/// Per-sample scores of `dataset` for each kind; `out[j][i]` is kind `j` on sample `i`.
pub fn score_many(
    model: &MlpModel,
    features: &[Vec<f64>],
    kinds: &[ScoreKind],
    bank: Option<&BankIndex>,
) -> Result<Vec<Vec<f64>>> {
    for k in kinds {
        k.validate()?;
        if !matches!(
            k.innermost(),
            ScoreKind::Msp
                | ScoreKind::MaxLogit
                | ScoreKind::Energy
                | ScoreKind::KlUniform
                | ScoreKind::L1
                | ScoreKind::Lp { .. }
                | ScoreKind::InvL0
                | ScoreKind::Nan
                | ScoreKind::EmbeddingMagnitude
                | ScoreKind::HiddenConfidence
        ) || k.uses_react()
        {
            require_bank(k, bank)?;
        }
    }
    let mut out = vec![Vec::with_capacity(features.len()); kinds.len()];
    for x in features {
        let trace = forward(model, x)?;
        for (col, k) in out.iter_mut().zip(kinds) {
            col.push(score_trace(model, &trace, k, bank)?);
        }
    }
    Ok(out)
}

pub fn score_dataset(
    model: &MlpModel,
    dataset: &Dataset,
    kind: &ScoreKind,
    bank: Option<&BankIndex>,
) -> Result<Vec<f64>> {
    Ok(score_many(model, &dataset.features, std::slice::from_ref(kind), bank)?.remove(0))
}

/// Last-hidden-layer activations of every sample, the default bank features.
pub fn last_hidden_features(model: &MlpModel, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    features
        .iter()
        .map(|x| forward(model, x).map(|t| t.last_hidden().to_vec()))
        .collect()
}
