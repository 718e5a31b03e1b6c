use serde::{Deserialize, Serialize};

use super::{Dataset, Role};
use crate::error::{invalid, Result};
use crate::numcore::{l2_norm, l2_normalized, mean_vector, Rng};

/// Gaussian blobs with class means on a sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobsParams {
    pub classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    /// Standard deviation of every coordinate around the class mean.
    pub spread: f64,
    /// Radius of the sphere the class means are drawn on.
    pub separation: f64,
    /// When set, means and within-class noise live in a random subspace of this
    /// dimension instead of the whole feature space.
    #[serde(default)]
    pub intrinsic_dim: Option<usize>,
    /// Norm of a common offset added to every sample (0 centres the blobs at the origin).
    #[serde(default)]
    pub offset: f64,
}

impl BlobsParams {
    /// Full-dimensional blobs around the origin.
    pub fn new(classes: usize, dim: usize, n_per_class: usize, spread: f64, separation: f64) -> Self {
        Self {
            classes,
            dim,
            n_per_class,
            spread,
            separation,
            intrinsic_dim: None,
            offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.intrinsic_dim {
            if r == 0 || r > self.dim {
                return Err(invalid(format!("intrinsic_dim {r} outside 1..={}", self.dim)));
            }
        }
        if !(self.offset >= 0.0 && self.offset.is_finite()) {
            return Err(invalid("offset must be finite and non-negative"));
        }
        if self.classes == 0 || self.dim < 2 || self.n_per_class == 0 {
            return Err(invalid("blobs need classes >= 1, dim >= 2 and n_per_class >= 1"));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) || !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(invalid("spread and separation must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Orthonormal `r`-frame in `R^d` (Gram-Schmidt on Gaussian draws).
fn random_frame(d: usize, r: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(r);
    while frame.len() < r {
        let mut v = rng.normal_vec(d);
        for q in &frame {
            let c: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        if l2_norm(&v) > 1e-8 {
            frame.push(l2_normalized(&v));
        }
    }
    frame
}

pub fn gen_blobs(params: &BlobsParams, rng: &Rng) -> Result<Dataset> {
    params.validate()?;
    let d = params.dim;
    let r = params.intrinsic_dim.unwrap_or(d);
    // Latent coordinates are embedded through `frame`; without a subspace the
    // embedding is the identity.
    let frame = params
        .intrinsic_dim
        .map(|r| random_frame(d, r, &mut rng.split("blob-subspace")));
    let embed = |latent: &[f64]| -> Vec<f64> {
        match &frame {
            None => latent.to_vec(),
            Some(q) => {
                let mut out = vec![0.0; d];
                for (c, basis) in latent.iter().zip(q) {
                    out.iter_mut().zip(basis).for_each(|(o, b)| *o += c * b);
                }
                out
            }
        }
    };
    let center: Vec<f64> = if params.offset > 0.0 {
        l2_normalized(&rng.split("blob-offset").normal_vec(d))
            .into_iter()
            .map(|v| v * params.offset)
            .collect()
    } else {
        vec![0.0; d]
    };
    let mut mean_rng = rng.split("blob-means");
    let means: Vec<Vec<f64>> = (0..params.classes)
        .map(|_| {
            let m: Vec<f64> = l2_normalized(&mean_rng.normal_vec(r))
                .into_iter()
                .map(|v| v * params.separation)
                .collect();
            embed(&m).iter().zip(&center).map(|(a, c)| a + c).collect()
        })
        .collect();
    let mut sample_rng = rng.split("blob-samples");
    let mut features = Vec::with_capacity(params.classes * params.n_per_class);
    let mut labels = Vec::with_capacity(features.capacity());
    for (k, mean) in means.iter().enumerate() {
        for _ in 0..params.n_per_class {
            let noise = embed(&sample_rng.normal_vec(r));
            features.push(mean.iter().zip(&noise).map(|(m, e)| m + params.spread * e).collect());
            labels.push(k);
        }
    }
    Dataset::new("blobs", features, Some(labels), Role::IdTrain)
}

/// Per-class shuffle and split; the first `train_fraction` of each class goes to
/// the train fold. The folds are disjoint and together exhaustive.
pub fn stratified_split(data: &Dataset, train_fraction: f64, rng: &Rng) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(invalid(format!("train fraction {train_fraction} outside [0, 1]")));
    }
    let groups: Vec<Vec<usize>> = match &data.labels {
        None => vec![(0..data.len()).collect()],
        Some(labels) => {
            let mut g = vec![Vec::new(); data.num_classes().unwrap_or(0)];
            for (i, &y) in labels.iter().enumerate() {
                g[y].push(i);
            }
            g
        }
    };
    let mut rng = rng.split("split");
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for mut idx in groups {
        rng.shuffle(&mut idx);
        let cut = (idx.len() as f64 * train_fraction).floor() as usize;
        train_idx.extend_from_slice(&idx[..cut]);
        test_idx.extend_from_slice(&idx[cut..]);
    }
    let pick = |idx: &[usize], suffix: &str, role: Role| {
        Dataset::new(
            format!("{}_{suffix}", data.name),
            idx.iter().map(|&i| data.features[i].clone()).collect(),
            data.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            role,
        )
    };
    Ok((pick(&train_idx, "train", Role::IdTrain)?, pick(&test_idx, "test", Role::IdTest)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodKind {
    UniformBox,
    ShiftedGaussian,
    ScaledGaussian,
    Interpolated,
}

impl OodKind {
    pub const ALL: [OodKind; 4] = [
        OodKind::UniformBox,
        OodKind::ShiftedGaussian,
        OodKind::ScaledGaussian,
        OodKind::Interpolated,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OodKind::UniformBox => "uniform_box",
            OodKind::ShiftedGaussian => "shifted_gaussian",
            OodKind::ScaledGaussian => "scaled_gaussian",
            OodKind::Interpolated => "interpolated",
        }
    }
}

/// OOD family plus its shape parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodSpec {
    pub kind: OodKind,
    /// Box side relative to the reference bounding box (uniform_box).
    #[serde(default = "default_box_factor")]
    pub box_factor: f64,
    /// Mean displacement in units of the within-class spread (shifted_gaussian).
    #[serde(default = "default_shift_factor")]
    pub shift_factor: f64,
    /// Covariance multiplier (scaled_gaussian).
    #[serde(default = "default_variance_factor")]
    pub variance_factor: f64,
}

fn default_box_factor() -> f64 {
    1.5
}
fn default_shift_factor() -> f64 {
    4.0
}
fn default_variance_factor() -> f64 {
    9.0
}

impl OodSpec {
    pub fn new(kind: OodKind) -> Self {
        Self {
            kind,
            box_factor: default_box_factor(),
            shift_factor: default_shift_factor(),
            variance_factor: default_variance_factor(),
        }
    }
}

/// Class means and the pooled within-class standard deviation of a labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub means: Vec<Vec<f64>>,
    pub spread: f64,
}

pub fn class_stats(reference: &Dataset) -> ClassStats {
    let groups: Vec<Vec<Vec<f64>>> = reference.by_class().into_iter().filter(|g| !g.is_empty()).collect();
    let means: Vec<Vec<f64>> = groups.iter().map(|g| mean_vector(g)).collect();
    let mut ss = 0.0;
    let mut count = 0usize;
    for (g, m) in groups.iter().zip(&means) {
        for p in g {
            ss += p.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            count += p.len();
        }
    }
    let spread = if count > 0 { (ss / count as f64).sqrt() } else { 0.0 };
    ClassStats { means, spread }
}

/// Draws `n` OOD samples relative to `reference`.
pub fn gen_ood(spec: &OodSpec, reference: &Dataset, n: usize, rng: &Rng) -> Result<Dataset> {
    if reference.is_empty() {
        return Err(invalid("OOD generation needs a non-empty reference set"));
    }
    let d = reference.dim();
    let mut rng = rng.split(&format!("ood-{}", spec.kind.name()));
    let features: Vec<Vec<f64>> = match spec.kind {
        OodKind::UniformBox => {
            let mut lo = reference.features[0].clone();
            let mut hi = lo.clone();
            for f in &reference.features {
                for j in 0..d {
                    lo[j] = lo[j].min(f[j]);
                    hi[j] = hi[j].max(f[j]);
                }
            }
            (0..n)
                .map(|_| {
                    (0..d)
                        .map(|j| {
                            let c = 0.5 * (lo[j] + hi[j]);
                            let h = 0.5 * (hi[j] - lo[j]) * spec.box_factor;
                            rng.uniform_range(c - h, c + h)
                        })
                        .collect()
                })
                .collect()
        }
        OodKind::ShiftedGaussian => {
            let stats = class_stats(reference);
            let shifts: Vec<Vec<f64>> = stats
                .means
                .iter()
                .map(|_| l2_normalized(&rng.normal_vec(d)))
                .collect();
            (0..n)
                .map(|_| {
                    let c = rng.below(stats.means.len());
                    (0..d)
                        .map(|j| {
                            stats.means[c][j]
                                + spec.shift_factor * stats.spread * shifts[c][j]
                                + stats.spread * rng.normal()
                        })
                        .collect()
                })
                .collect()
        }
        OodKind::ScaledGaussian => {
            let stats = class_stats(reference);
            let scale = spec.variance_factor.sqrt() * stats.spread;
            (0..n)
                .map(|_| {
                    let c = rng.below(stats.means.len());
                    stats.means[c].iter().map(|m| m + scale * rng.normal()).collect()
                })
                .collect()
        }
        OodKind::Interpolated => {
            let labels = reference.labels.as_deref();
            let multi_class = reference.num_classes().unwrap_or(1) > 1;
            (0..n)
                .map(|_| {
                    let i = rng.below(reference.len());
                    let j = loop {
                        let j = rng.below(reference.len());
                        let differs = match labels {
                            Some(l) if multi_class => l[i] != l[j],
                            _ => j != i || reference.len() == 1,
                        };
                        if differs {
                            break j;
                        }
                    };
                    let lambda = rng.uniform_range(0.25, 0.75);
                    reference.features[i]
                        .iter()
                        .zip(&reference.features[j])
                        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                        .collect()
                })
                .collect()
        }
    };
    Dataset::new(spec.kind.name(), features, None, Role::Ood)
}
