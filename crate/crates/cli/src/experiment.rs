//! generate → train → diagnose → score → evaluate → report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use oodlab_core::data::{gen_blobs, gen_ood, stratified_split, Dataset, OodKind, Role};
use oodlab_core::eval::{activation_entropy, auroc, fpr95, mean_sparsity, spearman};
use oodlab_core::hidden::{hidden_diagnostics, HiddenDiagnostics};
use oodlab_core::net::{build_mlp, forward, MlpModel};
use oodlab_core::numcore::Rng;
use oodlab_core::scores::{BankIndex, ScoreKind};
use oodlab_core::train::{accuracy, assign_labels, train, EpochRecord, LabelScheme, LabeledSet, TrainOutcome};
use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate_scaled_gaussian, Calibration};
use crate::config::ExperimentConfig;
use crate::error::{io_err, Result, StageExt};
use crate::plot::{line_chart, Series};
use crate::Workers;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub name: String,
    pub ood_set: String,
    pub auroc: f64,
    pub fpr95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainAuroc {
    pub name: String,
    pub ood_set: String,
    /// Training samples the model saw against the same OOD set.
    pub train_auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub epoch: usize,
    /// Mean over units of the Bernoulli activation entropy, ID test set, per hidden layer.
    pub layer_entropy: Vec<f64>,
    /// l1-norm AUROC of ID test against each OOD set.
    pub l1_auroc: BTreeMap<String, f64>,
    /// One entry per hidden layer; empty when diagnostics are disabled.
    pub hidden: Vec<HiddenDiagnostics>,
}

impl CheckpointRecord {
    /// Entropy of the last hidden layer.
    pub fn mean_activation_entropy(&self) -> f64 {
        *self.layer_entropy.last().unwrap_or(&0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub scheme: LabelScheme,
    pub num_classes: usize,
    pub train_samples: usize,
    /// Last-epoch accuracy on the scheme's own labels.
    pub final_train_accuracy: Option<f64>,
    /// Ground-truth accuracy on ID test; only defined for scheme S.
    pub id_accuracy: Option<f64>,
    pub mean_activation_entropy: f64,
    pub mean_sparsity: f64,
    pub react_threshold: Option<f64>,
    pub calibration: Option<Calibration>,
    pub train_auroc: Vec<TrainAuroc>,
    pub checkpoints: Vec<CheckpointRecord>,
    /// Spearman between last-layer entropy and l1 AUROC across checkpoints, per OOD set.
    pub entropy_l1_spearman: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub seed: u64,
    pub config_digest: String,
    pub scores: Vec<ScoreRecord>,
    pub diagnostics: Diagnostics,
}

impl RunReport {
    pub fn score(&self, name: &str, ood_set: &str) -> Option<&ScoreRecord> {
        self.scores.iter().find(|s| s.name == name && s.ood_set == ood_set)
    }

    pub fn train_auroc(&self, name: &str, ood_set: &str) -> Option<f64> {
        self.diagnostics
            .train_auroc
            .iter()
            .find(|s| s.name == name && s.ood_set == ood_set)
            .map(|s| s.train_auroc)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Everything produced by a run, in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub report: RunReport,
    pub model: MlpModel,
    pub history: Vec<EpochRecord>,
}

/// ID train/test folds of the configured generator.
pub fn id_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let root = Rng::new(cfg.seed);
    let all = gen_blobs(&cfg.data.blobs, &root.split("data")).stage("data")?;
    let (mut tr, mut te) = stratified_split(&all, cfg.data.train_fraction, &root.split("split")).stage("data")?;
    if !cfg.data.labeled {
        tr.labels = None;
        te.labels = None;
    }
    Ok((tr, te))
}

/// The samples the configured scheme trains on: instance schemes may use an
/// evenly spaced subset.
pub fn training_subset(cfg: &ExperimentConfig, train: &Dataset) -> Result<Dataset> {
    let instance = matches!(cfg.train.scheme, LabelScheme::I | LabelScheme::Is);
    match cfg.data.instance_subset {
        Some(n) if instance && n < train.len() => {
            let idx: Vec<usize> = (0..n).map(|i| i * train.len() / n).collect();
            let features = idx.iter().map(|&i| train.features[i].clone()).collect();
            let labels = train.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
            Dataset::new(format!("{}-subset", train.name), features, labels, Role::IdTrain).stage("data")
        }
        _ => Ok(train.clone()),
    }
}

pub fn train_model(cfg: &ExperimentConfig, data: &Dataset) -> Result<(LabeledSet, TrainOutcome)> {
    let root = Rng::new(cfg.seed);
    let labeled = assign_labels(data, cfg.train.scheme, &root.split("labels")).stage("labels")?;
    let spec = cfg.mlp_spec(labeled.num_classes)?;
    let model = build_mlp(&spec, &mut root.split("model")).stage("model")?;
    let outcome = train(&model, &labeled, &cfg.train_config()).stage("train")?;
    Ok((labeled, outcome))
}

/// OOD sets drawn against `reference`; scaled_gaussian may first be calibrated on `model`.
pub fn ood_sets(
    cfg: &ExperimentConfig,
    model: &MlpModel,
    reference: &Dataset,
    probe: &Dataset,
) -> Result<(Vec<Dataset>, Option<Calibration>)> {
    let root = Rng::new(cfg.seed);
    let mut calibration = None;
    let mut sets = Vec::with_capacity(cfg.eval.ood.len());
    for spec in &cfg.eval.ood {
        let mut spec = *spec;
        if spec.kind == OodKind::ScaledGaussian {
            if let Some(grid) = &cfg.eval.scaled_gaussian_grid {
                let c = calibrate_scaled_gaussian(model, reference, probe, grid, cfg.eval.n_ood, &root.split("calibration"))?;
                spec.variance_factor = c.chosen;
                calibration = Some(c);
            }
        }
        sets.push(gen_ood(&spec, reference, cfg.eval.n_ood, &root.split("ood")).stage("ood")?);
    }
    Ok((sets, calibration))
}

pub fn build_bank(
    cfg: &ExperimentConfig,
    model: &MlpModel,
    bank_data: &Dataset,
    workers: &Workers,
) -> Result<Option<BankIndex>> {
    let kinds = &cfg.scores.kinds;
    if !kinds.iter().any(needs_bank) {
        return Ok(None);
    }
    let features = workers.last_hidden(model, &bank_data.features)?;
    // Class structure is only known to the bank under the supervised scheme.
    let labels = match cfg.train.scheme {
        LabelScheme::S => bank_data.labels.clone(),
        _ => None,
    };
    let root = Rng::new(cfg.seed);
    BankIndex::for_kinds(features, labels, kinds, cfg.scores.react_percentile, &root.split("bank"))
        .stage("bank")
        .map(Some)
}

pub fn needs_bank(kind: &ScoreKind) -> bool {
    kind.uses_react()
        || !matches!(
            kind.innermost(),
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
        )
}

/// Per-kind scores and the metrics derived from them.
pub struct Evaluation {
    pub scores: Vec<ScoreRecord>,
    pub train_auroc: Vec<TrainAuroc>,
    /// `[kind][sample]` on the ID test set.
    pub test_scores: Vec<Vec<f64>>,
    /// `[ood set][kind][sample]`
    pub ood_scores: Vec<Vec<Vec<f64>>>,
}

pub fn evaluate(
    cfg: &ExperimentConfig,
    model: &MlpModel,
    train_set: &Dataset,
    test_set: &Dataset,
    oods: &[Dataset],
    bank: Option<&BankIndex>,
    workers: &Workers,
) -> Result<Evaluation> {
    let kinds = &cfg.scores.kinds;
    let test_scores = workers.score(model, &test_set.features, kinds, bank)?;
    let train_scores = workers.score(model, &train_set.features, kinds, bank)?;
    let mut ood_scores = Vec::with_capacity(oods.len());
    for o in oods {
        ood_scores.push(workers.score(model, &o.features, kinds, bank)?);
    }
    let mut scores = Vec::new();
    let mut train_auroc = Vec::new();
    for (o, os) in oods.iter().zip(&ood_scores) {
        for (j, k) in kinds.iter().enumerate() {
            scores.push(ScoreRecord {
                name: k.to_string(),
                ood_set: o.name.clone(),
                auroc: auroc(&test_scores[j], &os[j]).stage("eval")?,
                fpr95: fpr95(&test_scores[j], &os[j]).stage("eval")?,
            });
            train_auroc.push(TrainAuroc {
                name: k.to_string(),
                ood_set: o.name.clone(),
                train_auroc: auroc(&train_scores[j], &os[j]).stage("eval")?,
            });
        }
    }
    Ok(Evaluation {
        scores,
        train_auroc,
        test_scores,
        ood_scores,
    })
}

/// Ground-truth ID test accuracy, defined for scheme S only.
pub fn id_accuracy(cfg: &ExperimentConfig, model: &MlpModel, test_set: &Dataset) -> Result<Option<f64>> {
    match (&cfg.train.scheme, &test_set.labels) {
        (LabelScheme::S, Some(y)) => Ok(Some(accuracy(model, &test_set.features, y).stage("eval")?)),
        _ => Ok(None),
    }
}

fn layer_entropies(model: &MlpModel, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let traces = xs
        .iter()
        .map(|x| forward(model, x))
        .collect::<oodlab_core::Result<Vec<_>>>()
        .stage("diagnostics")?;
    (1..=model.depth())
        .map(|l| {
            let acts: Vec<Vec<f64>> = traces.iter().map(|t| t.a(l).to_vec()).collect();
            activation_entropy(&acts).map(|e| e.mean).stage("diagnostics")
        })
        .collect()
}

fn checkpoint_records(
    cfg: &ExperimentConfig,
    outcome: &TrainOutcome,
    labeled: &LabeledSet,
    test: &Dataset,
    oods: &[Dataset],
    workers: &Workers,
) -> Result<Vec<CheckpointRecord>> {
    let l1 = [ScoreKind::L1];
    let n_diag = cfg.eval.diagnostic_samples.min(labeled.len());
    let diag_idx: Vec<usize> = (0..n_diag).map(|i| i * labeled.len() / n_diag.max(1)).collect();
    let diag_x: Vec<Vec<f64>> = diag_idx.iter().map(|&i| labeled.features[i].clone()).collect();
    let diag_y: Vec<usize> = diag_idx.iter().map(|&i| labeled.labels[i]).collect();
    let mut out = Vec::with_capacity(outcome.checkpoints.len());
    for ck in &outcome.checkpoints {
        let m = &ck.model;
        let id = workers.score(m, &test.features, &l1, None)?.remove(0);
        let mut l1_auroc = BTreeMap::new();
        for o in oods {
            let s = workers.score(m, &o.features, &l1, None)?.remove(0);
            l1_auroc.insert(o.name.clone(), auroc(&id, &s).stage("diagnostics")?);
        }
        let hidden = if n_diag > 0 {
            (1..=m.depth())
                .map(|l| hidden_diagnostics(m, &diag_x, &diag_y, l))
                .collect::<oodlab_core::Result<Vec<_>>>()
                .stage("diagnostics")?
        } else {
            Vec::new()
        };
        out.push(CheckpointRecord {
            epoch: ck.epoch,
            layer_entropy: layer_entropies(m, &test.features)?,
            l1_auroc,
            hidden,
        });
    }
    Ok(out)
}

/// Runs the whole pipeline into `out_root/<run_id>/`.
pub fn run_experiment(cfg: &ExperimentConfig, out_root: &Path, workers: &Workers) -> Result<RunOutput> {
    cfg.validate()?;
    let (train_set, test_set) = id_data(cfg)?;
    let used = training_subset(cfg, &train_set)?;
    let (labeled, outcome) = train_model(cfg, &used)?;
    let model = outcome.model.clone();
    let (oods, calibration) = ood_sets(cfg, &model, &train_set, &test_set)?;
    let bank = build_bank(cfg, &model, &used, workers)?;
    let kinds = &cfg.scores.kinds;

    let ev = evaluate(cfg, &model, &used, &test_set, &oods, bank.as_ref(), workers)?;
    let Evaluation { scores, train_auroc, test_scores, ood_scores } = ev;

    let checkpoints = checkpoint_records(cfg, &outcome, &labeled, &test_set, &oods, workers)?;
    let mut entropy_l1_spearman = BTreeMap::new();
    if checkpoints.len() >= 3 {
        let ent: Vec<f64> = checkpoints.iter().map(CheckpointRecord::mean_activation_entropy).collect();
        for o in &oods {
            let auc: Vec<f64> = checkpoints.iter().map(|c| c.l1_auroc[&o.name]).collect();
            entropy_l1_spearman.insert(o.name.clone(), spearman(&ent, &auc).stage("diagnostics")?);
        }
    }
    let last_acts = workers.last_hidden(&model, &test_set.features)?;
    let diagnostics = Diagnostics {
        scheme: cfg.train.scheme,
        num_classes: labeled.num_classes,
        train_samples: labeled.len(),
        final_train_accuracy: outcome.history.last().map(|h| h.train_acc),
        id_accuracy: id_accuracy(cfg, &model, &test_set)?,
        mean_activation_entropy: activation_entropy(&last_acts).stage("eval")?.mean,
        mean_sparsity: mean_sparsity(&last_acts).stage("eval")?,
        react_threshold: bank.as_ref().and_then(BankIndex::react_threshold),
        calibration,
        train_auroc,
        checkpoints,
        entropy_l1_spearman,
    };
    let report = RunReport {
        run_id: cfg.run_id(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        scores,
        diagnostics,
    };

    let dir = out_root.join(&report.run_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    model.save(dir.join("model.json")).stage("output")?;
    write(&dir.join("history.csv"), &history_csv(&outcome.history))?;
    write(&dir.join("diagnostics.csv"), &diagnostics_csv(&report.diagnostics.checkpoints))?;
    let mut blocks = vec![("id_test".to_string(), false, &test_scores)];
    blocks.extend(oods.iter().zip(&ood_scores).map(|(o, s)| (o.name.clone(), true, s)));
    write(&dir.join("scores.csv"), &scores_csv(kinds, &blocks))?;
    write(&dir.join("report.json"), &report.to_json())?;
    if cfg.output.plots {
        write_plots(&dir.join("plots"), &outcome.history, &report.diagnostics)?;
    }
    Ok(RunOutput {
        dir,
        report,
        model,
        history: outcome.history,
    })
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,loss,train_acc,lr\n");
    for h in history {
        let _ = writeln!(s, "{},{},{},{}", h.epoch, h.loss, h.train_acc, h.lr);
    }
    s
}

pub fn diagnostics_csv(checkpoints: &[CheckpointRecord]) -> String {
    let mut s = String::from("checkpoint_epoch,layer,hidden_accuracy,entropy,sign_diff,err_target,err_nontarget\n");
    for c in checkpoints {
        for (i, ent) in c.layer_entropy.iter().enumerate() {
            let _ = write!(s, "{},{},", c.epoch, i + 1);
            match c.hidden.get(i) {
                Some(h) => {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{}",
                        h.hidden_accuracy,
                        ent,
                        h.mean_sign_difference_target,
                        h.mean_normalized_error_target,
                        h.mean_normalized_error_nontarget
                    );
                }
                None => {
                    let _ = writeln!(s, ",{ent},,,");
                }
            }
        }
    }
    s
}

/// `sample_id,is_ood,<kind>...`; `blocks` holds (set name, is OOD, scores[kind][sample]).
pub fn scores_csv(kinds: &[ScoreKind], blocks: &[(String, bool, &Vec<Vec<f64>>)]) -> String {
    let mut s = String::from("sample_id,is_ood");
    for k in kinds {
        let _ = write!(s, ",{k}");
    }
    s.push('\n');
    for (name, is_ood, cols) in blocks {
        let n = cols.first().map_or(0, Vec::len);
        for i in 0..n {
            let _ = write!(s, "{name}/{i},{}", u8::from(*is_ood));
            for c in cols.iter() {
                let _ = write!(s, ",{}", c[i]);
            }
            s.push('\n');
        }
    }
    s
}

fn write_plots(dir: &Path, history: &[EpochRecord], d: &Diagnostics) -> Result<()> {
    let epoch = |h: &EpochRecord| h.epoch as f64;
    write(
        &dir.join("history.svg"),
        &line_chart(
            "Training",
            "epoch",
            "value",
            &[
                Series::new("loss", history.iter().map(|h| (epoch(h), h.loss)).collect()),
                Series::new("train accuracy", history.iter().map(|h| (epoch(h), h.train_acc)).collect()),
            ],
        ),
    )?;
    let ck = |f: &dyn Fn(&CheckpointRecord) -> Option<f64>| -> Vec<(f64, f64)> {
        d.checkpoints
            .iter()
            .filter_map(|c| f(c).map(|v| (c.epoch as f64, v)))
            .collect()
    };
    let depth = d.checkpoints.first().map_or(0, |c| c.layer_entropy.len());
    let hidden: Vec<Series> = (0..depth)
        .flat_map(|l| {
            [
                Series::new(
                    format!("accuracy, layer {}", l + 1),
                    ck(&|c: &CheckpointRecord| c.hidden.get(l).map(|h| h.hidden_accuracy)),
                ),
                Series::new(
                    format!("target error, layer {}", l + 1),
                    ck(&|c: &CheckpointRecord| c.hidden.get(l).map(|h| h.mean_normalized_error_target)),
                ),
            ]
        })
        .collect();
    write(
        &dir.join("hidden_classifier.svg"),
        &line_chart("Hidden classifier", "epoch", "value", &hidden),
    )?;
    let names: Vec<String> = d
        .checkpoints
        .first()
        .map(|c| c.l1_auroc.keys().cloned().collect())
        .unwrap_or_default();
    let aucs: Vec<Series> = names
        .iter()
        .map(|n| Series::new(n.clone(), ck(&|c: &CheckpointRecord| c.l1_auroc.get(n).copied())))
        .collect();
    write(&dir.join("l1_auroc.svg"), &line_chart("l1-norm AUROC", "epoch", "AUROC", &aucs))?;
    let ents: Vec<Series> = (0..depth)
        .map(|l| {
            Series::new(
                format!("layer {}", l + 1),
                ck(&|c: &CheckpointRecord| c.layer_entropy.get(l).copied()),
            )
        })
        .collect();
    write(
        &dir.join("entropy.svg"),
        &line_chart("Activation entropy", "epoch", "mean entropy (nats)", &ents),
    )
}
