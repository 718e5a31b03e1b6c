//! Vector-level primitives: norms, sign patterns, softmax and friends.

use crate::error::{invalid, Result};

/// `(Σ|v_i|^p)^(1/p)`, with `p = f64::INFINITY` giving `max |v_i|`.
pub fn lp_norm(v: &[f64], p: f64) -> Result<f64> {
    if p.is_nan() || p <= 0.0 {
        return Err(invalid(format!("norm exponent must be positive, got {p}")));
    }
    Ok(if p == f64::INFINITY {
        linf_norm(v)
    } else if p == 1.0 {
        l1_norm(v)
    } else if p == 2.0 {
        l2_norm(v)
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    })
}

#[inline]
pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

#[inline]
pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
pub fn linf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Number of strictly positive entries. Zero counts as deactivated.
pub fn active_count(v: &[f64]) -> usize {
    v.iter().filter(|&&x| x > 0.0).count()
}

/// `+1` for strictly positive entries, `-1` otherwise (including zero).
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn sign_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| sign(x)).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

pub fn logsumexp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// Shannon entropy (natural log) of a probability vector, with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Lower nearest-rank percentile: the sorted value at index `ceil(q/100·n) − 1`,
/// clamped to `[0, n − 1]`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("percentile of an empty list"));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(invalid(format!("percentile {q} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = (q / 100.0 * n as f64).ceil() as i64 - 1;
    let idx = rank.clamp(0, n as i64 - 1) as usize;
    Ok(sorted[idx])
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `v / ‖v‖₂`, or the zero vector when `v` is zero.
pub fn l2_normalized(v: &[f64]) -> Vec<f64> {
    let n = l2_norm(v);
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        vec![0.0; v.len()]
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn mean_vector(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points.first().map_or(0, Vec::len);
    let mut m = vec![0.0; d];
    for p in points {
        for (a, x) in m.iter_mut().zip(p) {
            *a += x;
        }
    }
    let n = points.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms() {
        assert_eq!(lp_norm(&[3.0, -4.0], 2.0).unwrap(), 5.0);
        assert_eq!(lp_norm(&[0.0, 0.0, 0.0], 3.0).unwrap(), 0.0);
        assert_eq!(lp_norm(&[0.0, 0.0, 0.0], f64::INFINITY).unwrap(), 0.0);
        assert_eq!(lp_norm(&[1.0, 0.0, 2.0, 0.0], 1.0).unwrap(), 3.0);
        assert_eq!(lp_norm(&[1.0, -7.0], f64::INFINITY).unwrap(), 7.0);
        assert!(lp_norm(&[1.0], 0.0).is_err());
        assert!(lp_norm(&[1.0], -2.0).is_err());
    }

    #[test]
    fn active_counts() {
        assert_eq!(active_count(&[1.0, 0.0, 2.0, 0.0]), 2);
        assert_eq!(active_count(&[0.0, 0.0]), 0);
        assert_eq!(active_count(&[-1.0, 0.5, 3.0]), 2);
    }

    #[test]
    fn signs() {
        assert_eq!(sign_vec(&[2.0, -3.0]), vec![1.0, -1.0]);
        assert_eq!(sign_vec(&[0.0]), vec![-1.0]);
        assert_eq!(sign_vec(&[0.0001, -0.0001, 5.0]), vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-300_f64.max(1e-15) && p[1] >= 0.0 && p[1] < 1e-300);
        let p = softmax(&[1.0f64.ln(), 3.0f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn logsumexp_cases() {
        assert!((logsumexp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(logsumexp(&[5.0]), 5.0);
        // ln(e + e^2 + e^3)
        let expected = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln();
        assert!((logsumexp(&[1.0, 2.0, 3.0]) - expected).abs() < 1e-14);
        assert!((expected - 3.40760596).abs() < 1e-8);
        assert!(logsumexp(&[1000.0, 1000.0]).is_finite());
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 90.0).unwrap(), 90.0);
        assert_eq!(percentile(&[5.0], 37.0).unwrap(), 5.0);
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 50.0).unwrap(), 2.0);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 100.0).unwrap(), 3.0);
        assert!(percentile(&[], 50.0).is_err());
    }

    #[test]
    fn entropy_of_uniform() {
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
    }
}
