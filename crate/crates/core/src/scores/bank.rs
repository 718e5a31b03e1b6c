use std::collections::BTreeMap;

use super::kind::ScoreKind;
use crate::error::{invalid, Error, Result};
use crate::numcore::{
    covariance, fit_gaussian, kmeans, l2_normalized, percentile, shrink_toward, spd_inverse, trace,
    GaussianModel, KMeans, PrincipalSubspace, Rng, DEFAULT_SHRINKAGE, pca_subspace,
};

pub const DEFAULT_REACT_PERCENTILE: f64 = 90.0;
/// SSD cluster count when the bank carries no class labels.
pub const DEFAULT_LABEL_FREE_CLUSTERS: usize = 5;
const KMEANS_MAX_ITER: usize = 100;

/// k-means clusters of the bank, each with its own shrunk Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub kmeans: KMeans,
    pub gaussians: Vec<GaussianModel>,
}

impl ClusterModel {
    pub fn min_distance_sq(&self, f: &[f64]) -> f64 {
        self.gaussians
            .iter()
            .map(|g| g.min_distance_sq(f))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Reference statistics of the ID bank (by default `a^(L)` of the training set).
///
/// Built once with the `with_*` methods, then only read.
#[derive(Debug, Clone, PartialEq)]
pub struct BankIndex {
    features: Vec<Vec<f64>>,
    /// Unit-norm copies of `features`; all-zero rows stay zero.
    normalized: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
    gaussian: Option<GaussianModel>,
    clusters: BTreeMap<usize, ClusterModel>,
    pca: BTreeMap<usize, PrincipalSubspace>,
    react_threshold: Option<f64>,
    shrinkage: f64,
}

impl BankIndex {
    pub fn new(features: Vec<Vec<f64>>, labels: Option<Vec<usize>>) -> Result<Self> {
        let Some(d) = features.first().map(Vec::len) else {
            return Err(invalid("bank is empty"));
        };
        if features.iter().any(|f| f.len() != d || f.iter().any(|x| !x.is_finite())) {
            return Err(invalid("bank features must be finite and of equal length"));
        }
        if labels.as_ref().is_some_and(|l| l.len() != features.len()) {
            return Err(invalid("bank labels and features differ in length"));
        }
        let normalized = features.iter().map(|f| l2_normalized(f)).collect();
        Ok(Self {
            features,
            normalized,
            labels,
            gaussian: None,
            clusters: BTreeMap::new(),
            pca: BTreeMap::new(),
            react_threshold: None,
            shrinkage: DEFAULT_SHRINKAGE,
        })
    }

    /// Covariance shrinkage used by later `with_gaussian` / `with_clusters` calls.
    pub fn with_shrinkage(mut self, shrinkage: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&shrinkage) {
            return Err(invalid(format!("shrinkage {shrinkage} outside [0, 1]")));
        }
        self.shrinkage = shrinkage;
        Ok(self)
    }

    /// Class-conditional Gaussian; a label-free bank is treated as one class.
    pub fn with_gaussian(mut self) -> Result<Self> {
        let groups = match &self.labels {
            Some(labels) => {
                let k = labels.iter().max().map_or(0, |m| m + 1);
                let mut groups = vec![Vec::new(); k];
                for (f, &y) in self.features.iter().zip(labels) {
                    groups[y].push(f.clone());
                }
                groups
            }
            None => vec![self.features.clone()],
        };
        self.gaussian = Some(fit_gaussian(&groups, self.shrinkage)?);
        Ok(self)
    }

    /// Each cluster's covariance is shrunk toward `(tr(Σ_bank)/d)·I`, so clusters
    /// with one or two members still get an invertible covariance.
    pub fn with_clusters(mut self, k: usize, rng: &mut Rng) -> Result<Self> {
        if k == 0 || k > self.len() {
            return Err(invalid(format!("cannot form {k} clusters from {} bank vectors", self.len())));
        }
        let km = kmeans(&self.features, k, rng, KMEANS_MAX_ITER)?;
        let (_, bank_cov) = covariance(&self.features)?;
        let target = trace(&bank_cov) / self.dim() as f64;
        let mut gaussians = Vec::with_capacity(k);
        for c in 0..k {
            let members: Vec<Vec<f64>> = self
                .features
                .iter()
                .zip(&km.assignments)
                .filter(|(_, &a)| a == c)
                .map(|(f, _)| f.clone())
                .collect();
            if members.is_empty() {
                continue;
            }
            let (mean, cov) = covariance(&members)?;
            let covariance = shrink_toward(&cov, self.shrinkage, target);
            let precision = spd_inverse(&covariance).map_err(|e| {
                Error::NumericalFailure(format!("cluster {c} covariance: {e}"))
            })?;
            gaussians.push(GaussianModel {
                means: vec![mean],
                covariance,
                precision,
                shrinkage: self.shrinkage,
            });
        }
        self.clusters.insert(k, ClusterModel { kmeans: km, gaussians });
        Ok(self)
    }

    pub fn with_pca(mut self, dim: usize) -> Result<Self> {
        let sub = pca_subspace(&self.features, dim)?;
        self.pca.insert(dim, sub);
        Ok(self)
    }

    /// ReAct clipping threshold: the `q`-th percentile of all bank activations pooled over units.
    pub fn with_react(mut self, q: f64) -> Result<Self> {
        let pooled: Vec<f64> = self.features.iter().flatten().copied().collect();
        self.react_threshold = Some(percentile(&pooled, q)?);
        Ok(self)
    }

    /// Builds every index the given kinds need, with default parameters filled in.
    pub fn for_kinds(
        features: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
        kinds: &[ScoreKind],
        react_percentile: f64,
        rng: &Rng,
    ) -> Result<Self> {
        let mut bank = Self::new(features, labels)?;
        for kind in kinds {
            kind.validate()?;
            if kind.uses_react() && bank.react_threshold.is_none() {
                bank = bank.with_react(react_percentile)?;
            }
            match kind.innermost() {
                ScoreKind::Mahalanobis if bank.gaussian.is_none() => bank = bank.with_gaussian()?,
                ScoreKind::Ssd { clusters } => {
                    let c = clusters.unwrap_or_else(|| bank.default_clusters());
                    if !bank.clusters.contains_key(&c) {
                        let mut r = rng.split(&format!("ssd-{c}"));
                        bank = bank.with_clusters(c, &mut r)?;
                    }
                }
                ScoreKind::Residual { dim } => {
                    let d = dim.unwrap_or_else(|| bank.default_residual_dim());
                    if !bank.pca.contains_key(&d) {
                        bank = bank.with_pca(d)?;
                    }
                }
                _ => {}
            }
        }
        Ok(bank)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn normalized_features(&self) -> &[Vec<f64>] {
        &self.normalized
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn gaussian(&self) -> Option<&GaussianModel> {
        self.gaussian.as_ref()
    }

    pub fn clusters(&self, k: usize) -> Option<&ClusterModel> {
        self.clusters.get(&k)
    }

    pub fn pca(&self, dim: usize) -> Option<&PrincipalSubspace> {
        self.pca.get(&dim)
    }

    pub fn react_threshold(&self) -> Option<f64> {
        self.react_threshold
    }

    /// Number of label classes, or a fixed count for label-free banks.
    pub fn default_clusters(&self) -> usize {
        match &self.labels {
            Some(l) => {
                let mut seen: Vec<usize> = l.clone();
                seen.sort_unstable();
                seen.dedup();
                seen.len().min(self.len())
            }
            None => DEFAULT_LABEL_FREE_CLUSTERS.min(self.len()),
        }
    }

    pub fn default_residual_dim(&self) -> usize {
        (self.dim() / 4).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_rows_are_unit_or_zero() {
        let bank = BankIndex::new(vec![vec![3.0, 4.0], vec![0.0, 0.0], vec![1e-3, 0.0]], None).unwrap();
        let n = bank.normalized_features();
        assert!((n[0][0] - 0.6).abs() < 1e-15 && (n[0][1] - 0.8).abs() < 1e-15);
        assert_eq!(n[1], vec![0.0, 0.0]);
        assert!((crate::numcore::l2_norm(&n[2]) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_banks() {
        assert!(BankIndex::new(vec![], None).is_err());
        assert!(BankIndex::new(vec![vec![1.0], vec![1.0, 2.0]], None).is_err());
        assert!(BankIndex::new(vec![vec![f64::NAN]], None).is_err());
        assert!(BankIndex::new(vec![vec![1.0]], Some(vec![0, 1])).is_err());
    }

    #[test]
    fn react_threshold_pools_units() {
        let feats: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 10.0 + i as f64]).collect();
        let bank = BankIndex::new(feats, None).unwrap().with_react(50.0).unwrap();
        // pooled sorted: 0 1 2 3 4 10 11 12 13 14 -> rank ceil(5) - 1 = 4
        assert_eq!(bank.react_threshold(), Some(4.0));
    }

    #[test]
    fn for_kinds_builds_what_is_needed() {
        let feats: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 7) as f64, (i % 3) as f64, (i % 5) as f64, (i % 2) as f64])
            .collect();
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let kinds: Vec<ScoreKind> = ["react:nan", "ssd", "residual", "fused:mahalanobis", "knn:3"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let bank = BankIndex::for_kinds(feats, Some(labels), &kinds, 90.0, &Rng::new(1)).unwrap();
        assert!(bank.react_threshold().is_some());
        assert!(bank.gaussian().is_some());
        assert_eq!(bank.default_clusters(), 2);
        assert!(bank.clusters(2).is_some());
        assert!(bank.pca(1).is_some());
    }
}
