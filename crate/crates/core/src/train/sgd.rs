use serde::{Deserialize, Serialize};

use super::labels::{augment, LabelScheme, LabeledSet};
use crate::error::{invalid, Error, Result};
use crate::net::{backward, forward, MlpModel};
use crate::numcore::{argmax, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub scheme: LabelScheme,
    #[serde(default)]
    pub augment_noise_sigma: f64,
    pub seed: u64,
    /// Snapshot the model every this many epochs (0 keeps only the first and last).
    #[serde(default)]
    pub checkpoint_stride: usize,
}

impl TrainConfig {
    pub fn new(scheme: LabelScheme, epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            batch_size: 64,
            lr0: 0.06,
            momentum: 0.9,
            weight_decay: 5e-4,
            scheme,
            augment_noise_sigma: 0.0,
            seed,
            checkpoint_stride: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(invalid(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(self.weight_decay >= 0.0) || !(self.augment_noise_sigma >= 0.0) {
            return Err(invalid("weight_decay and augment_noise_sigma must be non-negative"));
        }
        Ok(())
    }
}

/// `lr0 · ½(1 + cos(π t / total))`
pub fn cosine_lr(t: usize, total: usize, lr0: f64) -> Result<f64> {
    if total == 0 {
        return Err(invalid("cosine schedule over zero epochs"));
    }
    if t > total {
        return Err(invalid(format!("epoch {t} beyond schedule length {total}")));
    }
    Ok(lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub lr: f64,
}

/// Model snapshot taken after `epoch` completed epochs (0 is the initial model).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub model: MlpModel,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub history: Vec<EpochRecord>,
    pub checkpoints: Vec<Checkpoint>,
}

/// Fraction of samples whose arg-max logit equals the label.
pub fn accuracy(model: &MlpModel, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if features.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for (x, &y) in features.iter().zip(labels) {
        if argmax(&forward(model, x)?.logits) == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / features.len() as f64)
}

/// Mini-batch SGD with momentum, cosine learning-rate decay and decoupled weight
/// decay on every weight matrix and the prototypes (biases are not decayed).
pub fn train(model: &MlpModel, data: &LabeledSet, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(invalid("empty training set"));
    }
    if data.num_classes != model.num_classes() {
        return Err(invalid(format!(
            "scheme {} yields {} classes but the model has {} prototypes",
            data.scheme.name(),
            data.num_classes,
            model.num_classes()
        )));
    }
    let mut model = model.clone();
    let decayed = model.decayed_blocks();
    let mut velocity: Vec<Vec<f64>> = model.param_slices().iter().map(|s| vec![0.0; s.len()]).collect();
    let root = Rng::new(config.seed);
    let n = data.len();

    let mut history = Vec::with_capacity(config.epochs);
    let mut checkpoints = vec![Checkpoint { epoch: 0, model: model.clone() }];

    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config.epochs, config.lr0)?;
        let order = root.split_index("shuffle", epoch as u64).permutation(n);
        let mut aug_rng = root.split_index("augment", epoch as u64);
        let mut loss_sum = 0.0;
        let mut correct = 0;

        for batch in order.chunks(config.batch_size) {
            let xs: Vec<Vec<f64>> = batch
                .iter()
                .map(|&i| {
                    if data.scheme.augments() {
                        augment(&data.features[i], config.augment_noise_sigma, &mut aug_rng)
                    } else {
                        data.features[i].clone()
                    }
                })
                .collect();
            let ys: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let out = backward(&model, &xs, &ys).map_err(|e| match e {
                Error::NumericalFailure(m) => Error::NumericalFailure(format!("epoch {epoch}: {m}")),
                other => other,
            })?;
            loss_sum += out.loss * batch.len() as f64;
            correct += out.correct;

            let grads = out.grads.slices();
            for (((params, g), v), &decay) in model
                .param_slices_mut()
                .into_iter()
                .zip(grads)
                .zip(velocity.iter_mut())
                .zip(&decayed)
            {
                let shrink = if decay { lr * config.weight_decay } else { 0.0 };
                for ((p, &gi), vi) in params.iter_mut().zip(g).zip(v.iter_mut()) {
                    *vi = config.momentum * *vi + gi;
                    *p -= lr * *vi + shrink * *p;
                }
            }
        }

        let loss = loss_sum / n as f64;
        if !loss.is_finite() {
            return Err(Error::NumericalFailure(format!("epoch {epoch}: training loss diverged")));
        }
        history.push(EpochRecord {
            epoch: epoch + 1,
            loss,
            train_acc: correct as f64 / n as f64,
            lr,
        });
        let done = epoch + 1;
        let stride_hit = config.checkpoint_stride > 0 && done % config.checkpoint_stride == 0;
        if stride_hit || done == config.epochs {
            checkpoints.push(Checkpoint { epoch: done, model: model.clone() });
        }
    }

    Ok(TrainOutcome {
        model,
        history,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, BlobsParams, Dataset, Role};
    use crate::net::{build_mlp, Activation, MlpSpec};
    use crate::train::assign_labels;

    #[test]
    fn cosine_schedule() {
        assert_eq!(cosine_lr(0, 10, 0.06).unwrap(), 0.06);
        assert!(cosine_lr(10, 10, 0.06).unwrap().abs() < 1e-18);
        assert!((cosine_lr(5, 10, 0.06).unwrap() - 0.03).abs() < 1e-15);
        assert!(cosine_lr(0, 0, 0.06).is_err());
        assert!(cosine_lr(11, 10, 0.06).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::new(LabelScheme::S, 1, 0);
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        c.momentum = 0.5;
        c.lr0 = 0.0;
        assert!(c.validate().is_err());
        c.lr0 = 0.1;
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    fn two_blobs() -> Dataset {
        let p = BlobsParams::new(2, 4, 40, 0.3, 3.0);
        gen_blobs(&p, &Rng::new(10)).unwrap()
    }

    #[test]
    fn single_class_only_decays() {
        let ds = two_blobs();
        let labeled = assign_labels(&ds, LabelScheme::O, &Rng::new(0)).unwrap();
        let spec = MlpSpec::new(vec![4, 16, 16], Activation::Relu, 1);
        let model = build_mlp(&spec, &mut Rng::new(1)).unwrap();
        let mut cfg = TrainConfig::new(LabelScheme::O, 5, 2);
        cfg.weight_decay = 1e-2;
        cfg.checkpoint_stride = 1;
        let out = train(&model, &labeled, &cfg).unwrap();
        assert!(out.history.iter().all(|h| h.loss == 0.0));
        let norms: Vec<Vec<f64>> = out.checkpoints.iter().map(|c| c.model.weight_norms()).collect();
        for w in norms.windows(2) {
            for (before, after) in w[0].iter().zip(&w[1]) {
                assert!(after < before);
            }
        }
        // Directions are untouched: each matrix is a positive multiple of the initial one.
        let ratio = out.model.weight(1)[(0, 0)] / model.weight(1)[(0, 0)];
        assert!(out.model.weight(1).max_abs_diff(&model.weight(1).map(|w| w * ratio)) < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = two_blobs();
        let labeled = assign_labels(&ds, LabelScheme::S, &Rng::new(0)).unwrap();
        let mut spec = MlpSpec::new(vec![4, 8, 8], Activation::Gelu, 2);
        spec.use_bias = true;
        let model = build_mlp(&spec, &mut Rng::new(1)).unwrap();
        let cfg = TrainConfig::new(LabelScheme::S, 3, 9);
        let a = train(&model, &labeled, &cfg).unwrap();
        let b = train(&model, &labeled, &cfg).unwrap();
        let bits = |m: &MlpModel| m.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.model), bits(&b.model));
    }

    #[test]
    fn class_count_mismatch() {
        let ds = Dataset::new("d", vec![vec![1.0, 2.0]], Some(vec![0]), Role::IdTrain).unwrap();
        let labeled = assign_labels(&ds, LabelScheme::S, &Rng::new(0)).unwrap();
        let spec = MlpSpec::new(vec![2, 3], Activation::Relu, 2);
        let model = build_mlp(&spec, &mut Rng::new(1)).unwrap();
        assert!(train(&model, &labeled, &TrainConfig::new(LabelScheme::S, 1, 0)).is_err());
    }
}
