use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numcore::active_count;

/// Fraction of in-distribution samples a threshold must keep.
pub const TPR_TARGET: f64 = 0.95;
/// Sparsity credited to a sample with no active unit.
pub const SPARSITY_CAP: f64 = 1.0;

fn check_nonempty(id: &[f64], ood: &[f64]) -> Result<()> {
    if id.is_empty() || ood.is_empty() {
        return Err(invalid("AUROC/FPR95 need non-empty ID and OOD score lists"));
    }
    if id.iter().chain(ood).any(|x| x.is_nan()) {
        return Err(invalid("scores contain NaN"));
    }
    Ok(())
}

/// `P(id > ood) + ½·P(id = ood)`, by sorting and counting per tie group.
pub fn auroc(id: &[f64], ood: &[f64]) -> Result<f64> {
    check_nonempty(id, ood)?;
    let mut all: Vec<(f64, bool)> = id
        .iter()
        .map(|&s| (s, true))
        .chain(ood.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the Mann-Whitney U, kept integral so ties of exactly ½ stay exact.
    let mut twice_u: u128 = 0;
    let mut ood_below: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut n_id, mut n_ood) = (0u128, 0u128);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                n_id += 1;
            } else {
                n_ood += 1;
            }
            j += 1;
        }
        twice_u += n_id * (2 * ood_below + n_ood);
        ood_below += n_ood;
        i = j;
    }
    Ok(twice_u as f64 / (2.0 * id.len() as f64 * ood.len() as f64))
}

/// Smallest ID count whose share reaches [`TPR_TARGET`].
fn required_id_count(n: usize) -> usize {
    (1..=n)
        .find(|&c| c as f64 / n as f64 >= TPR_TARGET)
        .unwrap_or(n)
}

/// OOD acceptance rate at the largest threshold `τ` that keeps at least 95% of
/// ID scores `≥ τ`.
pub fn fpr95(id: &[f64], ood: &[f64]) -> Result<f64> {
    check_nonempty(id, ood)?;
    let tau = fpr95_threshold(id)?;
    Ok(ood.iter().filter(|&&s| s >= tau).count() as f64 / ood.len() as f64)
}

pub fn fpr95_threshold(id: &[f64]) -> Result<f64> {
    if id.is_empty() {
        return Err(invalid("threshold of an empty ID score list"));
    }
    let mut sorted = id.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[required_id_count(id.len()) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    /// Bernoulli entropy (nats) of `a_i > 0` for each unit.
    pub per_unit: Vec<f64>,
    pub mean: f64,
}

fn bernoulli_entropy(p: f64) -> f64 {
    let h = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

pub fn activation_entropy(activations: &[Vec<f64>]) -> Result<EntropyProfile> {
    let Some(d) = activations.first().map(Vec::len) else {
        return Err(invalid("activation entropy of an empty set"));
    };
    if activations.iter().any(|a| a.len() != d) {
        return Err(invalid("activation vectors differ in length"));
    }
    let n = activations.len() as f64;
    let per_unit: Vec<f64> = (0..d)
        .map(|i| {
            let on = activations.iter().filter(|a| a[i] > 0.0).count();
            bernoulli_entropy(on as f64 / n)
        })
        .collect();
    let mean = if d == 0 { 0.0 } else { per_unit.iter().sum::<f64>() / d as f64 };
    Ok(EntropyProfile { per_unit, mean })
}

/// Mean of `1/‖a‖₀`, crediting all-inactive samples with [`SPARSITY_CAP`].
pub fn mean_sparsity(activations: &[Vec<f64>]) -> Result<f64> {
    if activations.is_empty() {
        return Err(invalid("sparsity of an empty set"));
    }
    let total: f64 = activations
        .iter()
        .map(|a| match active_count(a) {
            0 => SPARSITY_CAP,
            c => 1.0 / c as f64,
        })
        .sum();
    Ok(total / activations.len() as f64)
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(invalid(format!("spearman inputs differ in length ({} vs {})", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(invalid("spearman needs at least three pairs"));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
