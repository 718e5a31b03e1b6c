use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::numcore::Rng;

/// Instance schemes give every sample its own prototype; the bank is capped here.
pub const MAX_INSTANCE_CLASSES: usize = 2048;

/// Probability of zeroing a coordinate in [`augment`].
pub const AUGMENT_DROP_PROB: f64 = 0.1;

/// How training labels are derived from a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelScheme {
    /// Ground-truth classes.
    S,
    /// One class per sample, `y_i = i`.
    I,
    /// Instance classes with feature-space augmentation.
    Is,
    /// Random binary labels drawn once.
    R,
    /// Every sample in the same class.
    O,
}

impl LabelScheme {
    pub const ALL: [LabelScheme; 5] = [LabelScheme::S, LabelScheme::I, LabelScheme::Is, LabelScheme::R, LabelScheme::O];

    pub fn needs_ground_truth(&self) -> bool {
        matches!(self, LabelScheme::S)
    }

    pub fn augments(&self) -> bool {
        matches!(self, LabelScheme::Is)
    }

    pub fn name(&self) -> &'static str {
        match self {
            LabelScheme::S => "S",
            LabelScheme::I => "I",
            LabelScheme::Is => "Is",
            LabelScheme::R => "R",
            LabelScheme::O => "O",
        }
    }
}

/// Training set with the scheme's labels attached.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub scheme: LabelScheme,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

pub fn assign_labels(dataset: &Dataset, scheme: LabelScheme, rng: &Rng) -> Result<LabeledSet> {
    if dataset.is_empty() {
        return Err(invalid("cannot label an empty dataset"));
    }
    let n = dataset.len();
    let (labels, num_classes) = match scheme {
        LabelScheme::S => {
            let labels = dataset.labels.clone().ok_or_else(|| {
                invalid(format!("scheme S needs ground-truth labels but '{}' is unlabeled", dataset.name))
            })?;
            let k = dataset.num_classes().unwrap_or(1).max(1);
            (labels, k)
        }
        LabelScheme::I | LabelScheme::Is => {
            if n > MAX_INSTANCE_CLASSES {
                return Err(invalid(format!(
                    "instance schemes are capped at {MAX_INSTANCE_CLASSES} samples, got {n}"
                )));
            }
            ((0..n).collect(), n)
        }
        LabelScheme::R => {
            let mut r = rng.split("random-binary-labels");
            ((0..n).map(|_| usize::from(r.bernoulli(0.5))).collect(), 2)
        }
        LabelScheme::O => (vec![0; n], 1),
    };
    Ok(LabeledSet {
        features: dataset.features.clone(),
        labels,
        num_classes,
        scheme,
    })
}

/// `x + σ·N(0, I)` followed by zeroing each coordinate with probability 0.1.
pub fn augment(x: &[f64], sigma: f64, rng: &mut Rng) -> Vec<f64> {
    augment_with(x, sigma, AUGMENT_DROP_PROB, rng)
}

pub fn augment_with(x: &[f64], sigma: f64, drop_prob: f64, rng: &mut Rng) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let noisy = if sigma > 0.0 { v + sigma * rng.normal() } else { v };
            if drop_prob > 0.0 && rng.bernoulli(drop_prob) {
                0.0
            } else {
                noisy
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Role;

    fn tiny(labels: Option<Vec<usize>>, n: usize) -> Dataset {
        Dataset::new("tiny", (0..n).map(|i| vec![i as f64, 1.0]).collect(), labels, Role::IdTrain).unwrap()
    }

    #[test]
    fn single_label_scheme() {
        let l = assign_labels(&tiny(None, 5), LabelScheme::O, &Rng::new(0)).unwrap();
        assert_eq!(l.labels, vec![0; 5]);
        assert_eq!(l.num_classes, 1);
    }

    #[test]
    fn instance_scheme() {
        let l = assign_labels(&tiny(None, 3), LabelScheme::I, &Rng::new(0)).unwrap();
        assert_eq!(l.labels, vec![0, 1, 2]);
        assert_eq!(l.num_classes, 3);
    }

    #[test]
    fn random_binary_is_fixed_per_seed() {
        let ds = tiny(None, 64);
        let a = assign_labels(&ds, LabelScheme::R, &Rng::new(5)).unwrap();
        let b = assign_labels(&ds, LabelScheme::R, &Rng::new(5)).unwrap();
        assert_eq!(a.labels, b.labels);
        assert!(a.labels.iter().all(|&y| y < 2));
        assert!(a.labels.contains(&0) && a.labels.contains(&1));
    }

    #[test]
    fn supervised_requires_labels() {
        assert!(assign_labels(&tiny(None, 3), LabelScheme::S, &Rng::new(0)).is_err());
        let l = assign_labels(&tiny(Some(vec![1, 0, 1]), 3), LabelScheme::S, &Rng::new(0)).unwrap();
        assert_eq!(l.labels, vec![1, 0, 1]);
        assert_eq!(l.num_classes, 2);
    }

    #[test]
    fn instance_cap() {
        let ds = tiny(None, MAX_INSTANCE_CLASSES + 1);
        assert!(assign_labels(&ds, LabelScheme::Is, &Rng::new(0)).is_err());
    }

    #[test]
    fn augment_identity_and_shape() {
        let x = vec![1.0, -2.0, 3.5];
        assert_eq!(augment_with(&x, 0.0, 0.0, &mut Rng::new(1)), x);
        assert_eq!(augment(&x, 0.3, &mut Rng::new(1)).len(), 3);
    }

    #[test]
    fn augment_mean_is_ninety_percent_of_input() {
        // Monte-Carlo oracle: E[x'] = 0.9·x, standard error σ_x'/√n per coordinate.
        let x = vec![2.0, -1.0, 0.5];
        let sigma = 0.5;
        let n = 10_000;
        let mut rng = Rng::new(77);
        let mut sum = vec![0.0; 3];
        for _ in 0..n {
            for (s, v) in sum.iter_mut().zip(augment(&x, sigma, &mut rng)) {
                *s += v;
            }
        }
        for (s, &xi) in sum.iter().zip(&x) {
            let mean = s / n as f64;
            // Var = 0.9(σ² + x²) − (0.9x)²
            let var = 0.9 * (sigma * sigma + xi * xi) - (0.9 * xi) * (0.9 * xi);
            let tol = 3.0 * var.sqrt() / (n as f64).sqrt();
            assert!((mean - 0.9 * xi).abs() < tol, "mean {mean} vs {}", 0.9 * xi);
        }
    }
}
