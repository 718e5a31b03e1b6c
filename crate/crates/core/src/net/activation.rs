use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Unit-wise rectifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    /// Exact form `z·Φ(z)` with the Gaussian CDF, not the tanh approximation.
    Gelu,
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

impl Activation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::LeakyRelu { slope } if !(slope > 0.0 && slope < 1.0) => {
                Err(invalid(format!("leaky ReLU slope {slope} outside (0, 1)")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Gelu => z * normal_cdf(z),
        }
    }

    /// `σ(z)/z` with the convention `·/0 = 0`. For GeLU this is `Φ(z)`.
    #[inline]
    pub fn ratio(&self, z: f64) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        match *self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Gelu => normal_cdf(z),
        }
    }

    /// `dσ/dz`; the kink of the piecewise-linear rectifiers takes the left slope.
    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Gelu => normal_cdf(z) + z * normal_pdf(z),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu { .. } => "leaky_relu",
            Activation::Gelu => "gelu",
        }
    }
}

/// Entrywise `σ(z_i)/z_i`: the diagonal of the layer's rectification matrix.
pub fn activation_ratio(z: &[f64], kind: Activation) -> Vec<f64> {
    z.iter().map(|&x| kind.ratio(x)).collect()
}
