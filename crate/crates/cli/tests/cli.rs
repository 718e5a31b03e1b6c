use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
name = "tiny"
seed = 3

[data]
generator = "blobs"
blobs = { classes = 3, dim = 5, n_per_class = 30, spread = 1.0, separation = 6.0 }

[model]
hidden = [8, 8]

[train]
scheme = "S"
epochs = 4
batch_size = 16

[scores]
kinds = ["msp", "l1", "nan", "knn:3", "fused:knn:3", "react:nan"]

[eval]
n_ood = 20
checkpoint_stride = 2
diagnostic_samples = 16

[[eval.ood]]
kind = "uniform_box"

[[eval.ood]]
kind = "interpolated"
"#;

fn oodlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oodlab"))
        .args(args)
        .env_remove("OODLAB_OUT")
        .env_remove("OODLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_passes_and_fault_names_gelu() {
    let ok = oodlab(&["verify", "--samples", "5"]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let bad = oodlab(&["verify", "--samples", "5", "--inject-gelu-fault"]);
    assert_eq!(code(&bad), 4);
    let err = stderr(&bad);
    assert!(err.contains("GeLU"), "{err}");
    assert!(!err.contains("LeakyReLU"), "{err}");
}

#[test]
fn verify_verdict_does_not_depend_on_seed() {
    for seed in ["1", "42"] {
        let ok = oodlab(&["verify", "--samples", "5", "--seed", seed]);
        assert_eq!(code(&ok), 0, "seed {seed}: {}", stderr(&ok));
        let bad = oodlab(&["verify", "--samples", "5", "--seed", seed, "--inject-gelu-fault"]);
        assert_eq!(code(&bad), 4, "seed {seed}");
    }
}

#[test]
fn unknown_config_key_is_rejected_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("epochs = 4", "epochs = 4\nepocs = 5"));
    let o = oodlab(&["train", "--config", &cfg, "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("train") && err.contains("epocs"), "{err}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = oodlab(&["train", "--config", "no_such_config"]);
    assert_eq!(code(&missing), 2);
    let cfg = write_config(dir.path(), &TINY.replace("epochs = 4", "epochs = 0"));
    let zero = oodlab(&["experiment", "--config", &cfg, "--out", s(dir.path())]);
    assert_eq!(code(&zero), 2);
    assert!(stderr(&zero).contains("train.epochs"), "{}", stderr(&zero));
    let threads = oodlab(&["verify", "--samples", "1", "--threads", "0"]);
    assert_eq!(code(&threads), 2);
}

#[test]
fn divergent_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("batch_size = 16", "batch_size = 16\nlr0 = 1e200"));
    let o = oodlab(&["train", "--config", &cfg, "--out", s(dir.path())]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn experiment_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let o = oodlab(&["experiment", "--config", &cfg, "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = PathBuf::from(String::from_utf8(o.stdout).unwrap().trim());
    for f in ["config.toml", "model.json", "plots/history.svg", "plots/entropy.svg"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let head = |f: &str| fs::read_to_string(run.join(f)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(head("history.csv"), "epoch,loss,train_acc,lr");
    assert_eq!(
        head("diagnostics.csv"),
        "checkpoint_epoch,layer,hidden_accuracy,entropy,sign_diff,err_target,err_nontarget"
    );
    assert_eq!(head("scores.csv"), "sample_id,is_ood,msp,l1,nan,knn:3,fused:knn:3,react:nan");
    // 18 ID test rows and 2 × 20 OOD rows.
    assert_eq!(fs::read_to_string(run.join("scores.csv")).unwrap().lines().count(), 1 + 18 + 40);
    // Epochs 0, 2, 4 × two layers.
    assert_eq!(fs::read_to_string(run.join("diagnostics.csv")).unwrap().lines().count(), 1 + 6);

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    for key in ["run_id", "seed", "config_digest", "scores", "diagnostics"] {
        assert!(report.get(key).is_some(), "report lacks {key}");
    }
    assert_eq!(report["scores"].as_array().unwrap().len(), 6 * 2);
    let first = &report["scores"][0];
    for key in ["name", "ood_set", "auroc", "fpr95"] {
        assert!(first.get(key).is_some(), "score lacks {key}");
    }

    let table = oodlab(&["report", s(&run)]);
    assert_eq!(code(&table), 0);
    assert!(String::from_utf8_lossy(&table.stdout).contains("fused:knn:3"));
}

#[test]
fn thread_count_does_not_change_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    let a = oodlab(&["experiment", "--config", &cfg, "--out", s(&one)]);
    let b = oodlab(&["experiment", "--config", &cfg, "--out", s(&two), "--threads", "2"]);
    let run = |o: &Output| PathBuf::from(String::from_utf8_lossy(&o.stdout).trim());
    let ra = fs::read(run(&a).join("report.json")).unwrap();
    let rb = fs::read(run(&b).join("report.json")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(
        fs::read(run(&a).join("model.json")).unwrap(),
        fs::read(run(&b).join("model.json")).unwrap()
    );
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let a = oodlab(&["train", "--config", &cfg, "--out", s(&dir.path().join("a"))]);
    let b = oodlab(&["train", "--config", &cfg, "--seed", "4", "--out", s(&dir.path().join("b"))]);
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0);
    assert_ne!(
        fs::read(dir.path().join("a/model.json")).unwrap(),
        fs::read(dir.path().join("b/model.json")).unwrap()
    );
}

#[test]
fn score_with_and_without_a_bank() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let data = dir.path().join("data");
    let gen = oodlab(&["gen-data", "--config", &cfg, "--out", s(&data)]);
    assert_eq!(code(&gen), 0, "{}", stderr(&gen));
    for f in ["train.csv", "test.csv", "ood_uniform_box.csv", "ood_interpolated.manifest.json"] {
        assert!(data.join(f).exists(), "missing {f}");
    }
    let header = fs::read_to_string(data.join("test.csv")).unwrap();
    assert!(header.starts_with("f0,f1,f2,f3,f4,label\n"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data.join("ood_uniform_box.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n"], 20);
    assert_eq!(manifest["d"], 5);
    assert_eq!(manifest["kind"], "uniform_box");

    let model_dir = dir.path().join("model");
    assert_eq!(code(&oodlab(&["train", "--config", &cfg, "--out", s(&model_dir)])), 0);
    let model = model_dir.join("model.json");
    let ood = data.join("ood_uniform_box.csv");

    let nan = oodlab(&["score", "--model", s(&model), "--data", s(&ood), "--kinds", "nan,l1", "--ood"]);
    assert_eq!(code(&nan), 0, "{}", stderr(&nan));
    let text = String::from_utf8(nan.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sample_id,is_ood,nan,l1");
    assert_eq!(lines.len(), 21);
    assert!(lines[1].starts_with("0,1,"));

    let knn = oodlab(&["score", "--model", s(&model), "--data", s(&ood), "--kinds", "knn:3"]);
    assert_ne!(code(&knn), 0);
    assert!(stderr(&knn).contains("knn:3"), "{}", stderr(&knn));

    let out = dir.path().join("scores.csv");
    let banked = oodlab(&[
        "score",
        "--model",
        s(&model),
        "--data",
        s(&ood),
        "--kinds",
        "knn:3,fused:knn:3",
        "--bank",
        s(&data.join("train.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&banked), 0, "{}", stderr(&banked));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 21);
}

#[test]
fn eval_reproduces_experiment_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let o = oodlab(&["experiment", "--config", &cfg, "--out", s(dir.path())]);
    let run = PathBuf::from(String::from_utf8(o.stdout).unwrap().trim());
    let eval_dir = dir.path().join("eval");
    let e = oodlab(&[
        "eval",
        "--config",
        &cfg,
        "--model",
        s(&run.join("model.json")),
        "--out",
        s(&eval_dir),
    ]);
    assert_eq!(code(&e), 0, "{}", stderr(&e));
    let load = |p: PathBuf| -> serde_json::Value { serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap() };
    assert_eq!(load(run.join("report.json"))["scores"], load(eval_dir.join("report.json"))["scores"]);
}

#[test]
fn bundled_config_resolves_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let o = oodlab(&["gen-data", "--config", "blobs_supervised", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("ood_scaled_gaussian.csv").exists());
}
