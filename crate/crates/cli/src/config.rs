//! TOML experiment configuration.

use std::path::Path;

use oodlab_core::data::{BlobsParams, OodKind, OodSpec};
use oodlab_core::net::{Activation, MlpSpec};
use oodlab_core::scores::{ScoreKind, DEFAULT_REACT_PERCENTILE};
use oodlab_core::train::{LabelScheme, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    #[serde(default)]
    pub scores: ScoresSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub generator: Generator,
    pub blobs: BlobsParams,
    /// Drop the generator's labels before training.
    #[serde(default = "yes")]
    pub labeled: bool,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Instance schemes train on this many evenly spaced training samples.
    #[serde(default)]
    pub instance_subset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: String,
    #[serde(default = "default_leaky_slope")]
    pub leaky_slope: f64,
    #[serde(default)]
    pub bias: bool,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub embedding_dim: Option<usize>,
    #[serde(default = "yes")]
    pub normalize_input: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub scheme: LabelScheme,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr0")]
    pub lr0: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub augment_noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoresSection {
    #[serde(default = "default_kinds")]
    pub kinds: Vec<ScoreKind>,
    #[serde(default = "default_react_percentile")]
    pub react_percentile: f64,
}

impl Default for ScoresSection {
    fn default() -> Self {
        Self {
            kinds: default_kinds(),
            react_percentile: default_react_percentile(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_ood")]
    pub ood: Vec<OodSpec>,
    #[serde(default = "default_n_ood")]
    pub n_ood: usize,
    #[serde(default = "default_checkpoint_stride")]
    pub checkpoint_stride: usize,
    /// Training samples used for the per-checkpoint hidden-classifier diagnostics (0 disables them).
    #[serde(default = "default_diagnostic_samples")]
    pub diagnostic_samples: usize,
    /// Candidate covariance multipliers for scaled_gaussian; when set, the factor is
    /// picked on a separate calibration draw before the evaluated sets are drawn.
    #[serde(default)]
    pub scaled_gaussian_grid: Option<Vec<f64>>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            ood: default_ood(),
            n_ood: default_n_ood(),
            checkpoint_stride: default_checkpoint_stride(),
            diagnostic_samples: default_diagnostic_samples(),
            scaled_gaussian_grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output root; the `--out` flag and `OODLAB_OUT` take precedence.
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default = "yes")]
    pub plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: None, plots: true }
    }
}

fn yes() -> bool {
    true
}
fn default_train_fraction() -> f64 {
    0.8
}
fn default_activation() -> String {
    "relu".into()
}
fn default_leaky_slope() -> f64 {
    0.01
}
fn default_temperature() -> f64 {
    0.1
}
fn default_batch_size() -> usize {
    64
}
fn default_lr0() -> f64 {
    0.06
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    5e-4
}
fn default_react_percentile() -> f64 {
    DEFAULT_REACT_PERCENTILE
}
fn default_n_ood() -> usize {
    400
}
fn default_checkpoint_stride() -> usize {
    20
}
fn default_diagnostic_samples() -> usize {
    256
}

fn default_kinds() -> Vec<ScoreKind> {
    [
        "msp", "maxlogit", "energy", "kl", "mahalanobis", "knn", "ssd", "residual", "l1", "invl0", "nan",
        "embedding", "hidden", "fused:knn", "fused:ssd", "react:nan", "react:l1",
    ]
    .iter()
    .map(|s| s.parse().expect("built-in score spelling"))
    .collect()
}

fn default_ood() -> Vec<OodSpec> {
    OodKind::ALL.iter().map(|&k| OodSpec::new(k)).collect()
}

fn config_err(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().to_string();
            if path == "." || path.is_empty() {
                CliError::Config(msg)
            } else {
                config_err(&path, msg)
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical TOML; parsing it back gives an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over the canonical TOML, hex encoded.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_toml().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_id(&self) -> String {
        format!("{}-{}", self.name, &self.digest()[..12])
    }

    pub fn activation(&self) -> Result<Activation> {
        let a = match self.model.activation.as_str() {
            "relu" => Activation::Relu,
            "leaky_relu" => Activation::LeakyRelu { slope: self.model.leaky_slope },
            "gelu" => Activation::Gelu,
            other => {
                return Err(config_err(
                    "model.activation",
                    format!("unknown activation {other:?} (expected relu, leaky_relu or gelu)"),
                ))
            }
        };
        a.validate().map_err(|e| config_err("model.leaky_slope", e))?;
        Ok(a)
    }

    /// Architecture for a head with `num_classes` prototypes.
    pub fn mlp_spec(&self, num_classes: usize) -> Result<MlpSpec> {
        let mut dims = vec![self.data.blobs.dim];
        dims.extend(&self.model.hidden);
        let mut spec = MlpSpec::new(dims, self.activation()?, num_classes);
        spec.use_bias = self.model.bias;
        spec.temperature = self.model.temperature;
        spec.embedding_dim = self.model.embedding_dim;
        spec.normalize_input = self.model.normalize_input;
        Ok(spec)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        let mut cfg = TrainConfig::new(t.scheme, t.epochs, self.seed);
        cfg.batch_size = t.batch_size;
        cfg.lr0 = t.lr0;
        cfg.momentum = t.momentum;
        cfg.weight_decay = t.weight_decay;
        cfg.augment_noise_sigma = t.augment_noise_sigma;
        cfg.checkpoint_stride = self.eval.checkpoint_stride;
        cfg
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(config_err("name", "use letters, digits, '_' or '-'"));
        }
        self.data.blobs.validate().map_err(|e| config_err("data.blobs", e))?;
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(config_err("data.train_fraction", "must lie in (0, 1)"));
        }
        if self.data.instance_subset == Some(0) {
            return Err(config_err("data.instance_subset", "must be at least 1"));
        }
        if self.train.scheme.needs_ground_truth() && !self.data.labeled {
            return Err(config_err(
                "train.scheme",
                format!(
                    "scheme {} needs ground-truth labels but data.labeled = false",
                    self.train.scheme.name()
                ),
            ));
        }
        if self.model.hidden.is_empty() {
            return Err(config_err("model.hidden", "needs at least one hidden layer"));
        }
        self.mlp_spec(1)?
            .validate()
            .map_err(|e| config_err("model", e))?;
        if self.train.epochs == 0 {
            return Err(config_err("train.epochs", "must be at least 1"));
        }
        self.train_config().validate().map_err(|e| config_err("train", e))?;
        if self.scores.kinds.is_empty() {
            return Err(config_err("scores.kinds", "list at least one score"));
        }
        for (i, k) in self.scores.kinds.iter().enumerate() {
            k.validate().map_err(|e| config_err(&format!("scores.kinds[{i}]"), e))?;
        }
        if !(0.0..=100.0).contains(&self.scores.react_percentile) {
            return Err(config_err("scores.react_percentile", "must lie in [0, 100]"));
        }
        if self.eval.ood.is_empty() {
            return Err(config_err("eval.ood", "list at least one OOD family"));
        }
        let mut names: Vec<&str> = self.eval.ood.iter().map(|o| o.kind.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(config_err("eval.ood", "each OOD family may appear once"));
        }
        if self.eval.n_ood == 0 {
            return Err(config_err("eval.n_ood", "must be at least 1"));
        }
        if let Some(grid) = &self.eval.scaled_gaussian_grid {
            if grid.is_empty() || grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(config_err("eval.scaled_gaussian_grid", "needs positive finite factors"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"
seed = 3

[data]
generator = "blobs"
blobs = { classes = 3, dim = 4, n_per_class = 10, spread = 1.0, separation = 5.0 }

[model]
hidden = [8]

[train]
scheme = "S"
epochs = 2
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.train.batch_size, 64);
        assert_eq!(c.eval.ood.len(), 4);
        assert!(c.data.labeled);
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_rejected_with_its_path() {
        let text = MINIMAL.replace("hidden = [8]", "hidden = [8]\nwidth = 3");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("model") && err.contains("width"), "{err}");
    }

    #[test]
    fn supervised_scheme_on_unlabeled_data_is_a_conflict() {
        let text = MINIMAL.replace("generator = \"blobs\"", "generator = \"blobs\"\nlabeled = false");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("train.scheme") && msg.contains("data.labeled"), "{msg}");
    }

    #[test]
    fn digest_tracks_content() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed += 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn bad_score_spelling_names_the_entry() {
        let text = format!("{MINIMAL}\n[scores]\nkinds = [\"nan\", \"knn:0\"]\n");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("scores.kinds"), "{err}");
    }
}
