use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::gaussian::covariance;
use super::matrix::{dot, Matrix};
use crate::error::{invalid, Result};

/// Mean plus an orthonormal basis (columns) of the top principal directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalSubspace {
    pub mean: Vec<f64>,
    /// `d × dim`, columns sorted by decreasing explained variance.
    pub basis: Matrix,
    pub explained_variance: Vec<f64>,
}

impl PrincipalSubspace {
    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    /// `‖(I − P Pᵀ)(f − mean)‖₂`
    pub fn residual_norm(&self, f: &[f64]) -> f64 {
        let centered: Vec<f64> = f.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let coords = self.basis.t_mat_vec(&centered);
        let proj = self.basis.mat_vec(&coords);
        let r: Vec<f64> = centered.iter().zip(&proj).map(|(a, b)| a - b).collect();
        dot(&r, &r).sqrt()
    }
}

pub fn pca_subspace(features: &[Vec<f64>], dim: usize) -> Result<PrincipalSubspace> {
    let d = features.first().map_or(0, Vec::len);
    if dim > d {
        return Err(invalid(format!("subspace dimension {dim} exceeds feature dimension {d}")));
    }
    if features.len() < dim + 1 {
        return Err(invalid(format!(
            "need at least {} samples for a {dim}-dimensional subspace, got {}",
            dim + 1,
            features.len()
        )));
    }
    let (mean, cov) = covariance(features)?;
    let eig = DMatrix::from_row_slice(d, d, cov.as_slice()).symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let basis = Matrix::from_fn(d, dim, |i, j| eig.eigenvectors[(i, order[j])]);
    let explained_variance = order[..dim].iter().map(|&j| eig.eigenvalues[j]).collect();
    Ok(PrincipalSubspace {
        mean,
        basis,
        explained_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn line_data_spans_line() {
        let dir = [1.0, 2.0, -2.0].map(|x: f64| x / 3.0);
        let pts: Vec<Vec<f64>> = (-5..=5)
            .map(|t| dir.iter().map(|x| x * t as f64).collect())
            .collect();
        let s = pca_subspace(&pts, 1).unwrap();
        let col = s.basis.col(0);
        assert!((dot(&col, &dir).abs() - 1.0).abs() < 1e-10);
        for p in &pts {
            assert!(s.residual_norm(p) < 1e-10);
        }
    }

    #[test]
    fn full_subspace_has_zero_residual() {
        let mut rng = Rng::new(4);
        let pts: Vec<Vec<f64>> = (0..20).map(|_| rng.normal_vec(4)).collect();
        let s = pca_subspace(&pts, 4).unwrap();
        let gram = s.basis.t_matmul(&s.basis);
        assert!(gram.max_abs_diff(&Matrix::identity(4)) < 1e-10);
        for _ in 0..5 {
            assert!(s.residual_norm(&rng.normal_vec(4)) < 1e-10);
        }
    }

    #[test]
    fn anisotropic_2d_aligns_with_major_axis() {
        let mut rng = Rng::new(9);
        let pts: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                let (u, v) = (3.0 * rng.normal(), 0.5 * rng.normal());
                // rotate by 30 degrees
                let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
                vec![c * u - s * v, s * u + c * v]
            })
            .collect();
        // Closed-form eigenvector of the sample 2x2 covariance.
        let (_, cov) = covariance(&pts).unwrap();
        let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
        let lambda = 0.5 * (a + c) + (0.25 * (a - c).powi(2) + b * b).sqrt();
        let v = [b, lambda - a];
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let s = pca_subspace(&pts, 1).unwrap();
        let col = s.basis.col(0);
        assert!(((col[0] * v[0] + col[1] * v[1]) / n).abs() > 1.0 - 1e-10);
        assert!((s.explained_variance[0] - lambda).abs() < 1e-10);
    }

    #[test]
    fn too_few_samples() {
        let pts = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(pca_subspace(&pts, 2).is_err());
        assert!(pca_subspace(&pts, 3).is_err());
    }
}
