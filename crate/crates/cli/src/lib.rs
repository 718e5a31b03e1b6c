//! Config-driven experiment runner around `oodlab-core`.

pub mod calibrate;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod verify;

use oodlab_core::net::MlpModel;
use oodlab_core::scores::{last_hidden_features, score_many, BankIndex, ScoreKind};
use rayon::prelude::*;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use experiment::{run_experiment, RunOutput, RunReport};

use error::StageExt;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "OODLAB_OUT";
/// Environment variable naming the default worker count.
pub const THREADS_ENV: &str = "OODLAB_THREADS";

/// Per-sample work split over a pool. Results keep the input order, so the
/// thread count never changes an output byte.
pub struct Workers {
    pool: Option<rayon::ThreadPool>,
    threads: usize,
}

impl Workers {
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| CliError::Config(format!("cannot start {threads} workers: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self { pool, threads })
    }

    pub fn sequential() -> Self {
        Self { pool: None, threads: 1 }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    fn chunked<T: Send>(
        &self,
        xs: &[Vec<f64>],
        f: impl Fn(&[Vec<f64>]) -> oodlab_core::Result<T> + Sync,
    ) -> oodlab_core::Result<Vec<T>> {
        match &self.pool {
            None => Ok(vec![f(xs)?]),
            Some(pool) => {
                let chunk = xs.len().div_ceil(self.threads * 4).max(1);
                pool.install(|| xs.par_chunks(chunk).map(&f).collect())
            }
        }
    }

    /// `out[kind][sample]`, as [`score_many`].
    pub fn score(
        &self,
        model: &MlpModel,
        xs: &[Vec<f64>],
        kinds: &[ScoreKind],
        bank: Option<&BankIndex>,
    ) -> Result<Vec<Vec<f64>>> {
        if xs.is_empty() {
            return score_many(model, xs, kinds, bank).stage("score");
        }
        let parts = self.chunked(xs, |c| score_many(model, c, kinds, bank)).stage("score")?;
        let mut out = vec![Vec::with_capacity(xs.len()); kinds.len()];
        for part in parts {
            for (col, p) in out.iter_mut().zip(part) {
                col.extend(p);
            }
        }
        Ok(out)
    }

    pub fn last_hidden(&self, model: &MlpModel, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let parts = self.chunked(xs, |c| last_hidden_features(model, c)).stage("features")?;
        Ok(parts.into_iter().flatten().collect())
    }
}
