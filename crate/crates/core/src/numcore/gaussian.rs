use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::vector::mean_vector;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_SHRINKAGE: f64 = 0.05;

/// Class-conditional Gaussians sharing one (shrunk) covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub means: Vec<Vec<f64>>,
    pub covariance: Matrix,
    pub precision: Matrix,
    pub shrinkage: f64,
}

impl GaussianModel {
    /// Squared Mahalanobis distance from `f` to class `k`.
    pub fn distance_sq(&self, f: &[f64], k: usize) -> f64 {
        quad_form(&self.precision, f, &self.means[k])
    }

    /// Smallest squared Mahalanobis distance over all classes.
    pub fn min_distance_sq(&self, f: &[f64]) -> f64 {
        (0..self.means.len())
            .map(|k| self.distance_sq(f, k))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn dim(&self) -> usize {
        self.covariance.rows()
    }
}

/// `(f - m)ᵀ P (f - m)`
pub fn quad_form(precision: &Matrix, f: &[f64], m: &[f64]) -> f64 {
    let diff: Vec<f64> = f.iter().zip(m).map(|(a, b)| a - b).collect();
    let pd = precision.mat_vec(&diff);
    diff.iter().zip(&pd).map(|(a, b)| a * b).sum()
}

/// Biased (divide-by-n) scatter of `points` around `mean`, added into `acc`.
fn accumulate_scatter(acc: &mut Matrix, points: &[Vec<f64>], mean: &[f64]) {
    let d = mean.len();
    for p in points {
        for i in 0..d {
            let di = p[i] - mean[i];
            if di == 0.0 {
                continue;
            }
            let row = acc.row_mut(i);
            for j in 0..d {
                row[j] += di * (p[j] - mean[j]);
            }
        }
    }
}

/// `(1 − s)·Σ + s·(tr(Σ)/d)·I`
pub fn shrink(cov: &Matrix, shrinkage: f64) -> Matrix {
    shrink_toward(cov, shrinkage, trace(cov) / cov.rows() as f64)
}

pub fn shrink_toward(cov: &Matrix, shrinkage: f64, target_scale: f64) -> Matrix {
    let mut out = cov.map(|x| (1.0 - shrinkage) * x);
    for i in 0..out.rows() {
        out[(i, i)] += shrinkage * target_scale;
    }
    out
}

pub fn trace(m: &Matrix) -> f64 {
    (0..m.rows().min(m.cols())).map(|i| m[(i, i)]).sum()
}

/// Covariance of `points` (divide by n).
pub fn covariance(points: &[Vec<f64>]) -> Result<(Vec<f64>, Matrix)> {
    if points.is_empty() {
        return Err(invalid("covariance of an empty set"));
    }
    let mean = mean_vector(points);
    let mut cov = Matrix::zeros(mean.len(), mean.len());
    accumulate_scatter(&mut cov, points, &mean);
    let n = points.len() as f64;
    cov.as_mut_slice().iter_mut().for_each(|x| *x /= n);
    Ok((mean, cov))
}

/// Fits per-class means and a pooled covariance shrunk toward `(tr/d)·I`.
pub fn fit_gaussian(features_by_class: &[Vec<Vec<f64>>], shrinkage: f64) -> Result<GaussianModel> {
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(invalid(format!("shrinkage {shrinkage} outside [0, 1]")));
    }
    let total: usize = features_by_class.iter().map(Vec::len).sum();
    if total < 2 {
        return Err(invalid("Gaussian fit needs at least two samples"));
    }
    let d = features_by_class
        .iter()
        .find_map(|c| c.first().map(Vec::len))
        .unwrap_or(0);
    let mut scatter = Matrix::zeros(d, d);
    let mut means = Vec::new();
    for class in features_by_class.iter().filter(|c| !c.is_empty()) {
        let mean = mean_vector(class);
        accumulate_scatter(&mut scatter, class, &mean);
        means.push(mean);
    }
    scatter
        .as_mut_slice()
        .iter_mut()
        .for_each(|x| *x /= total as f64);
    let covariance = shrink(&scatter, shrinkage);
    let precision = spd_inverse(&covariance)?;
    Ok(GaussianModel {
        means,
        covariance,
        precision,
        shrinkage,
    })
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag.is_nan() || diag <= tol {
            return Err(Error::NumericalFailure(format!(
                "matrix is not positive definite (pivot {j} = {diag:e})"
            )));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
pub fn spd_inverse(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let l = cholesky(a)?;
    let mut inv = Matrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for c in 0..n {
        // Solve L y = e_c, then Lᵀ x = y.
        col.iter_mut().for_each(|x| *x = 0.0);
        col[c] = 1.0;
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[(i, k)] * col[k];
            }
            col[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= l[(k, i)] * col[k];
            }
            col[i] = s / l[(i, i)];
        }
        for r in 0..n {
            inv[(r, c)] = col[r];
        }
    }
    // Symmetrize away rounding.
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = m;
            inv[(j, i)] = m;
        }
    }
    Ok(inv)
}
