use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oodlab::commands::{self, ScoreRequest};
use oodlab::config::ExperimentConfig;
use oodlab::verify::{into_result, run_verify, Fault};
use oodlab::{run_experiment, CliError, Result, Workers, OUT_ENV, THREADS_ENV};
use oodlab_core::scores::DEFAULT_REACT_PERCENTILE;

#[derive(Parser)]
#[command(name = "oodlab", version, about = "Hidden-classifier and OOD-score experiments on small MLPs")]
struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config (TOML), or the name of a bundled config.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Output directory (or output root for `experiment`).
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Worker threads for scoring.
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured ID folds and OOD sets as CSV with manifests.
    GenData,
    /// Train the configured model; writes model.json and history.csv.
    Train,
    /// Check the logit decomposition and binarization bound on random networks.
    Verify {
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Deliberately use a wrong rectification matrix for GeLU layers.
        #[arg(long)]
        inject_gelu_fault: bool,
    },
    /// Score one dataset CSV with a saved model.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated score kinds, e.g. `nan,knn:10,fused:ssd`.
        #[arg(long)]
        kinds: String,
        /// ID dataset CSV the feature bank is built from.
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_REACT_PERCENTILE)]
        react_percentile: f64,
        /// Mark every row as OOD in the output.
        #[arg(long)]
        ood: bool,
    },
    /// Evaluate a saved model on the configured data; writes report.json.
    Eval {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the full pipeline into `<out>/<run_id>/`.
    Experiment,
    /// Print the summary table of a run directory.
    Report { run_dir: PathBuf },
}

const BUNDLED: [(&str, &str); 2] = [
    ("blobs_supervised", include_str!("../configs/blobs_supervised.toml")),
    ("blobs_lowrank", include_str!("../configs/blobs_lowrank.toml")),
];

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let name = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("this command needs --config".into()))?;
    let mut cfg = if Path::new(name).exists() {
        ExperimentConfig::load(name)?
    } else if let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == name) {
        ExperimentConfig::from_toml(text)?
    } else {
        return Err(CliError::Config(format!("no config file or bundled config named {name:?}")));
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.dir.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn run(cli: &Cli) -> Result<()> {
    let workers = Workers::new(cli.threads)?;
    match &cli.command {
        Command::GenData => {
            let cfg = load_config(cli)?;
            let dir = out_dir(cli, Some(&cfg));
            create(&dir)?;
            for p in commands::gen_data(&cfg, &dir)? {
                println!("{}", p.display());
            }
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            let dir = out_dir(cli, Some(&cfg));
            create(&dir)?;
            commands::train_only(&cfg, &dir)?;
            println!("{}", dir.join("model.json").display());
        }
        Command::Verify {
            samples,
            inject_gelu_fault,
        } => {
            let fault = Fault {
                wrong_gelu_ratio: *inject_gelu_fault,
            };
            let report = run_verify(cli.seed.unwrap_or(0), *samples, fault)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            into_result(report)?;
        }
        Command::Score {
            model,
            data,
            kinds,
            bank,
            react_percentile,
            ood,
        } => {
            let kinds = commands::parse_kinds(kinds)?;
            let req = ScoreRequest {
                model,
                dataset: data,
                kinds: &kinds,
                bank: bank.as_deref(),
                react_percentile: *react_percentile,
                seed: cli.seed.unwrap_or(0),
                is_ood: *ood,
            };
            let csv = commands::score_file(&req, &workers)?;
            match &cli.out {
                Some(path) => std::fs::write(path, csv).map_err(|source| CliError::Io {
                    path: path.clone(),
                    source,
                })?,
                None => print!("{csv}"),
            }
        }
        Command::Eval { model } => {
            let cfg = load_config(cli)?;
            let dir = out_dir(cli, Some(&cfg));
            create(&dir)?;
            let model = commands::load_model(model)?;
            let report = commands::eval_model(&cfg, &model, &workers)?;
            let path = dir.join("report.json");
            std::fs::write(&path, report.to_json()).map_err(|source| CliError::Io { path: path.clone(), source })?;
            println!("{}", path.display());
        }
        Command::Experiment => {
            let cfg = load_config(cli)?;
            let root = out_dir(cli, Some(&cfg));
            let out = run_experiment(&cfg, &root, &workers)?;
            println!("{}", out.dir.display());
        }
        Command::Report { run_dir } => print!("{}", commands::summarize(run_dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
