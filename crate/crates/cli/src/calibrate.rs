//! Pre-registered choice of the scaled_gaussian covariance multiplier.
//!
//! The factor is picked on its own OOD draw (never the evaluated one) by a
//! brute-force pairwise AUROC over raw last-layer activations, so it shares no
//! code with the score or metric modules it is meant to exercise.

use oodlab_core::data::{gen_ood, Dataset, OodKind, OodSpec};
use oodlab_core::net::{forward, MlpModel};
use oodlab_core::numcore::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StageExt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub variance_factor: f64,
    pub nan_auroc: f64,
    pub l1_auroc: f64,
    /// OOD over ID mean active-unit count.
    pub density_ratio: f64,
    /// OOD over ID mean active-unit magnitude.
    pub magnitude_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub chosen: f64,
    pub rows: Vec<CalibrationRow>,
}

/// `P(id > ood) + ½ P(id = ood)` by counting every pair.
pub fn pairwise_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &a in id {
        for &b in ood {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (id.len() * ood.len()) as f64
}

struct Stats {
    l1: Vec<f64>,
    nan: Vec<f64>,
    mean_active: f64,
    mean_magnitude: f64,
}

fn stats(model: &MlpModel, xs: &[Vec<f64>]) -> Result<Stats> {
    let mut l1 = Vec::with_capacity(xs.len());
    let mut nan = Vec::with_capacity(xs.len());
    let mut active = 0.0;
    for x in xs {
        let t = forward(model, x).stage("calibration")?;
        let a = t.last_hidden();
        let s: f64 = a.iter().map(|v| v.abs()).sum();
        let n = a.iter().filter(|v| **v != 0.0).count();
        l1.push(s);
        nan.push(if n == 0 { 0.0 } else { s / n as f64 });
        active += n as f64;
    }
    let mean_magnitude = nan.iter().sum::<f64>() / xs.len() as f64;
    Ok(Stats {
        l1,
        nan,
        mean_active: active / xs.len() as f64,
        mean_magnitude,
    })
}

/// Scores each candidate factor and keeps the one with the widest NAN-over-l1
/// margin (the first on ties).
pub fn calibrate_scaled_gaussian(
    model: &MlpModel,
    id_reference: &Dataset,
    id_probe: &Dataset,
    grid: &[f64],
    n: usize,
    rng: &Rng,
) -> Result<Calibration> {
    let id = stats(model, &id_probe.features)?;
    let mut rows = Vec::with_capacity(grid.len());
    for &vf in grid {
        let mut spec = OodSpec::new(OodKind::ScaledGaussian);
        spec.variance_factor = vf;
        let ood = gen_ood(&spec, id_reference, n, rng).stage("calibration")?;
        let o = stats(model, &ood.features)?;
        rows.push(CalibrationRow {
            variance_factor: vf,
            nan_auroc: pairwise_auroc(&id.nan, &o.nan),
            l1_auroc: pairwise_auroc(&id.l1, &o.l1),
            density_ratio: o.mean_active / id.mean_active.max(1e-12),
            magnitude_ratio: o.mean_magnitude / id.mean_magnitude.max(1e-12),
        });
    }
    let mut chosen = rows[0].variance_factor;
    let mut best = f64::NEG_INFINITY;
    for r in &rows {
        let margin = r.nan_auroc - r.l1_auroc;
        if margin > best {
            best = margin;
            chosen = r.variance_factor;
        }
    }
    Ok(Calibration { chosen, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_auroc_counts_ties_as_half() {
        assert_eq!(pairwise_auroc(&[1.0, 2.0], &[0.0, 2.0]), 0.625);
        assert_eq!(pairwise_auroc(&[3.0], &[1.0, 2.0]), 1.0);
    }
}
