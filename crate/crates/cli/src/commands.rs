//! The individual pipeline stages behind each subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use oodlab_core::data::{gen_ood, load_csv, save_csv, Dataset, DatasetManifest, Role};
use oodlab_core::eval::{activation_entropy, mean_sparsity};
use oodlab_core::net::MlpModel;
use oodlab_core::numcore::Rng;
use oodlab_core::scores::{BankIndex, ScoreKind};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{io_err, CliError, Result, StageExt};
use crate::experiment::{
    build_bank, evaluate, history_csv, id_accuracy, id_data, ood_sets, scores_csv, train_model, training_subset,
    write, Diagnostics, RunReport,
};
use crate::Workers;

fn manifest(name: &str, kind: &str, params: impl Serialize, seed: u64, data: &Dataset) -> DatasetManifest {
    DatasetManifest {
        name: name.into(),
        kind: kind.into(),
        params: serde_json::to_value(params).expect("params serialize"),
        seed,
        n: data.len(),
        d: data.dim(),
    }
}

fn save_with_manifest(dir: &Path, data: &Dataset, m: &DatasetManifest) -> Result<PathBuf> {
    let csv = dir.join(format!("{}.csv", m.name));
    save_csv(data, &csv).stage("output")?;
    let json = serde_json::to_string_pretty(m).expect("manifest serializes");
    write(&dir.join(format!("{}.manifest.json", m.name)), &(json + "\n"))?;
    Ok(csv)
}

/// Writes `train.csv`, `test.csv` and one `ood_<family>.csv` per configured family,
/// each with a manifest. OOD sets use the configured factors without calibration.
pub fn gen_data(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let (train, test) = id_data(cfg)?;
    let mut written = vec![
        save_with_manifest(dir, &train, &manifest("train", "blobs", cfg.data.blobs, cfg.seed, &train))?,
        save_with_manifest(dir, &test, &manifest("test", "blobs", cfg.data.blobs, cfg.seed, &test))?,
    ];
    let root = Rng::new(cfg.seed);
    for spec in &cfg.eval.ood {
        let ood = gen_ood(spec, &train, cfg.eval.n_ood, &root.split("ood")).stage("ood")?;
        let name = format!("ood_{}", spec.kind.name());
        written.push(save_with_manifest(dir, &ood, &manifest(&name, spec.kind.name(), spec, cfg.seed, &ood))?);
    }
    Ok(written)
}

/// Trains on the configured data and writes `model.json` and `history.csv` into `dir`.
pub fn train_only(cfg: &ExperimentConfig, dir: &Path) -> Result<MlpModel> {
    let (train, _) = id_data(cfg)?;
    let used = training_subset(cfg, &train)?;
    let (_, outcome) = train_model(cfg, &used)?;
    outcome.model.save(dir.join("model.json")).stage("output")?;
    write(&dir.join("history.csv"), &history_csv(&outcome.history))?;
    Ok(outcome.model)
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    MlpModel::load(path).stage("model")
}

pub fn parse_kinds(spec: &str) -> Result<Vec<ScoreKind>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<ScoreKind>()
                .map_err(|e| CliError::Config(format!("--kinds: {e}")))
        })
        .collect()
}

pub struct ScoreRequest<'a> {
    pub model: &'a Path,
    pub dataset: &'a Path,
    pub kinds: &'a [ScoreKind],
    /// ID dataset the bank is built from; required by distance and ReAct kinds.
    pub bank: Option<&'a Path>,
    pub react_percentile: f64,
    pub seed: u64,
    pub is_ood: bool,
}

/// Scores one dataset; returns the scores CSV text.
pub fn score_file(req: &ScoreRequest, workers: &Workers) -> Result<String> {
    let model = load_model(req.model)?;
    let role = if req.is_ood { Role::Ood } else { Role::IdTest };
    let data = load_csv(req.dataset, role).stage("data")?;
    let bank = match req.bank {
        Some(p) => {
            let b = load_csv(p, Role::IdTrain).stage("bank")?;
            let feats = workers.last_hidden(&model, &b.features)?;
            Some(
                BankIndex::for_kinds(feats, b.labels, req.kinds, req.react_percentile, &Rng::new(req.seed).split("bank"))
                    .stage("bank")?,
            )
        }
        None => None,
    };
    let scores = workers.score(&model, &data.features, req.kinds, bank.as_ref())?;
    let mut text = scores_csv(req.kinds, &[("sample".into(), req.is_ood, &scores)]);
    // Plain integer ids for single-file scoring.
    text = text.replace("\nsample/", "\n");
    Ok(text)
}

/// Scores a saved model against freshly generated data; no checkpoints.
pub fn eval_model(cfg: &ExperimentConfig, model: &MlpModel, workers: &Workers) -> Result<RunReport> {
    let (train, test) = id_data(cfg)?;
    let used = training_subset(cfg, &train)?;
    let (oods, calibration) = ood_sets(cfg, model, &train, &test)?;
    let bank = build_bank(cfg, model, &used, workers)?;
    let ev = evaluate(cfg, model, &used, &test, &oods, bank.as_ref(), workers)?;
    let acts = workers.last_hidden(model, &test.features)?;
    Ok(RunReport {
        run_id: cfg.run_id(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        scores: ev.scores,
        diagnostics: Diagnostics {
            scheme: cfg.train.scheme,
            num_classes: model.num_classes(),
            train_samples: used.len(),
            final_train_accuracy: None,
            id_accuracy: id_accuracy(cfg, model, &test)?,
            mean_activation_entropy: activation_entropy(&acts).stage("eval")?.mean,
            mean_sparsity: mean_sparsity(&acts).stage("eval")?,
            react_threshold: bank.as_ref().and_then(BankIndex::react_threshold),
            calibration,
            train_auroc: ev.train_auroc,
            checkpoints: Vec::new(),
            entropy_l1_spearman: Default::default(),
        },
    })
}

/// Human-readable table of a run directory's `report.json`.
pub fn summarize(run_dir: &Path) -> Result<String> {
    let path = run_dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let report: RunReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Stage { stage: "report", source: e.into() })?;
    let mut s = String::new();
    let d = &report.diagnostics;
    let _ = writeln!(s, "run {} (seed {}, scheme {})", report.run_id, report.seed, d.scheme.name());
    let _ = writeln!(s, "config digest {}", report.config_digest);
    if let Some(acc) = d.id_accuracy {
        let _ = writeln!(s, "ID test accuracy {acc:.4}");
    }
    let _ = writeln!(
        s,
        "mean activation entropy {:.4}, mean sparsity {:.4}",
        d.mean_activation_entropy, d.mean_sparsity
    );
    let _ = writeln!(s, "{:<22} {:<18} {:>8} {:>8}", "score", "ood set", "AUROC", "FPR95");
    for r in &report.scores {
        let _ = writeln!(s, "{:<22} {:<18} {:>8.4} {:>8.4}", r.name, r.ood_set, r.auroc, r.fpr95);
    }
    Ok(s)
}
