//! Numeric building blocks: dense matrices, norms, statistics, clustering,
//! Gaussian fitting, PCA and seeded randomness.

mod cluster;
mod gaussian;
mod matrix;
mod pca;
mod rng;
mod vector;

pub use cluster::{kmeans, KMeans};
pub use gaussian::{
    cholesky, covariance, fit_gaussian, quad_form, shrink, shrink_toward, spd_inverse, trace,
    GaussianModel, DEFAULT_SHRINKAGE,
};
pub use matrix::{dot, Matrix};
pub use pca::{pca_subspace, PrincipalSubspace};
pub use rng::Rng;
pub use vector::{
    active_count, argmax, entropy, l1_norm, l2_norm, l2_normalized, linf_norm, logsumexp,
    lp_norm, mean, mean_vector, percentile, sign, sign_vec, softmax, sq_dist,
};
