use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::error::{invalid, Result};
use crate::numcore::{dot, l2_norm, l2_normalized, Matrix, Rng};

/// Architecture of a rectifier MLP with a cosine-similarity head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width followed by the hidden widths `d_0, d_1, …, d_L`.
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub use_bias: bool,
    pub num_classes: usize,
    pub temperature: f64,
    /// Width of the projected embedding `g = Uᵀ a^(L)`. `None` keeps `U = I`.
    pub embedding_dim: Option<usize>,
    /// Scale each input to unit l2 norm before the first layer.
    pub normalize_input: bool,
}

impl MlpSpec {
    pub fn new(layer_dims: Vec<usize>, activation: Activation, num_classes: usize) -> Self {
        Self {
            layer_dims,
            activation,
            use_bias: false,
            num_classes,
            temperature: 0.1,
            embedding_dim: None,
            normalize_input: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(invalid("an MLP needs an input width and at least one hidden layer"));
        }
        if self.layer_dims.contains(&0) {
            return Err(invalid("layer widths must be at least 1"));
        }
        if self.num_classes == 0 {
            return Err(invalid("number of classes must be at least 1"));
        }
        if self.embedding_dim == Some(0) {
            return Err(invalid("embedding width must be at least 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        self.activation.validate()
    }
}

/// Weights of a trained (or freshly initialised) network.
///
/// Layer `l` maps `a^(l-1)` to `z^(l) = W^(l)ᵀ a^(l-1) + β^(l)` and
/// `a^(l) = σ(z^(l))`. The head computes `g = Uᵀ a^(L)` and the scaled cosine
/// logits `ψ_k = (w_k · g) / (T ‖w_k‖ ‖g‖)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub(crate) dims: Vec<usize>,
    pub(crate) weights: Vec<Matrix>,
    pub(crate) biases: Option<Vec<Vec<f64>>>,
    pub(crate) projection: Option<Matrix>,
    pub(crate) prototypes: Matrix,
    pub(crate) temperature: f64,
    pub(crate) activation: Activation,
    pub(crate) normalize_input: bool,
}

fn uniform_fan_in(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let bound = (6.0 / rows as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(-bound, bound))
}

/// Random model: weights uniform on `±√(6/fan_in)`, zero biases, unit-norm
/// Gaussian prototypes.
pub fn build_mlp(spec: &MlpSpec, rng: &mut Rng) -> Result<MlpModel> {
    spec.validate()?;
    let dims = spec.layer_dims.clone();
    let mut rng_w = rng.split("weights");
    let weights: Vec<Matrix> = dims
        .windows(2)
        .map(|w| uniform_fan_in(w[0], w[1], &mut rng_w))
        .collect();
    let biases = spec
        .use_bias
        .then(|| dims[1..].iter().map(|&d| vec![0.0; d]).collect());
    let last = *dims.last().expect("validated");
    let projection = spec
        .embedding_dim
        .map(|e| uniform_fan_in(last, e, &mut rng.split("projection")));
    let emb = spec.embedding_dim.unwrap_or(last);
    let mut rng_p = rng.split("prototypes");
    let rows: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| l2_normalized(&rng_p.normal_vec(emb)))
        .collect();
    Ok(MlpModel {
        dims,
        weights,
        biases,
        projection,
        prototypes: Matrix::from_rows(&rows)?,
        temperature: spec.temperature,
        activation: spec.activation,
        normalize_input: spec.normalize_input,
    })
}

impl MlpModel {
    /// Assembles a model from explicit parameters, checking every shape.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        weights: Vec<Matrix>,
        biases: Option<Vec<Vec<f64>>>,
        projection: Option<Matrix>,
        prototypes: Matrix,
        temperature: f64,
        activation: Activation,
        normalize_input: bool,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("at least one hidden layer is required"));
        }
        let mut dims = vec![weights[0].rows()];
        for (l, w) in weights.iter().enumerate() {
            if w.rows() != *dims.last().unwrap() {
                return Err(invalid(format!(
                    "layer {} expects {} inputs but the previous layer has {}",
                    l + 1,
                    w.rows(),
                    dims.last().unwrap()
                )));
            }
            if !w.is_finite() {
                return Err(invalid(format!("layer {} has non-finite weights", l + 1)));
            }
            dims.push(w.cols());
        }
        if let Some(bs) = &biases {
            if bs.len() != weights.len() || bs.iter().zip(&dims[1..]).any(|(b, &d)| b.len() != d) {
                return Err(invalid("bias shapes do not match the layer widths"));
            }
        }
        let last = *dims.last().unwrap();
        let emb = match &projection {
            Some(u) if u.rows() != last => {
                return Err(invalid("projection rows must equal the last hidden width"))
            }
            Some(u) => u.cols(),
            None => last,
        };
        if prototypes.cols() != emb || prototypes.rows() == 0 {
            return Err(invalid(format!(
                "prototypes must be K x {emb}, got {}x{}",
                prototypes.rows(),
                prototypes.cols()
            )));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(invalid(format!("temperature must be positive, got {temperature}")));
        }
        activation.validate()?;
        Ok(Self {
            dims,
            weights,
            biases,
            projection,
            prototypes,
            temperature,
            activation,
            normalize_input,
        })
    }

    /// `[d_0, …, d_L]`
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.prototypes.cols()
    }

    /// `W^(l)` for `l = 1..=L`.
    pub fn weight(&self, l: usize) -> &Matrix {
        &self.weights[l - 1]
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    /// `β^(l)` for `l = 1..=L`, if the model has biases.
    pub fn bias(&self, l: usize) -> Option<&[f64]> {
        self.biases.as_ref().map(|b| b[l - 1].as_slice())
    }

    pub fn has_bias(&self) -> bool {
        self.biases.is_some()
    }

    pub fn projection(&self) -> Option<&Matrix> {
        self.projection.as_ref()
    }

    pub fn prototypes(&self) -> &Matrix {
        &self.prototypes
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn normalizes_input(&self) -> bool {
        self.normalize_input
    }

    /// Frobenius norm of every hidden weight matrix.
    pub fn weight_norms(&self) -> Vec<f64> {
        self.weights.iter().map(Matrix::frobenius_norm).collect()
    }

    /// What the first layer actually consumes.
    pub fn prepare_input(&self, x: &[f64]) -> Vec<f64> {
        if self.normalize_input {
            l2_normalized(x)
        } else {
            x.to_vec()
        }
    }

    /// `g = Uᵀ a^(L)`
    pub fn embed(&self, last_hidden: &[f64]) -> Vec<f64> {
        match &self.projection {
            Some(u) => u.t_mat_vec(last_hidden),
            None => last_hidden.to_vec(),
        }
    }

    /// Scaled cosine logits of an embedding; all zero when `‖g‖ = 0`.
    pub fn cosine_logits(&self, g: &[f64]) -> Vec<f64> {
        let gn = l2_norm(g);
        (0..self.num_classes())
            .map(|k| {
                let w = self.prototypes.row(k);
                let wn = l2_norm(w);
                if gn == 0.0 || wn == 0.0 {
                    0.0
                } else {
                    dot(w, g) / (self.temperature * wn * gn)
                }
            })
            .collect()
    }

    /// Logits obtained by feeding `a^(L)` straight into the head.
    pub fn head_logits(&self, last_hidden: &[f64]) -> Vec<f64> {
        self.cosine_logits(&self.embed(last_hidden))
    }

    /// The head as an input-dependent linear map on `a^(L)`:
    /// `diag(1/(T‖w_k‖‖g‖)) · P · Uᵀ`, so that `ψ = M a^(L)` exactly.
    /// The row scaling is positive, hence `sign(M) = sign(P Uᵀ)` whenever `g ≠ 0`.
    pub fn head_matrix(&self, embedding: &[f64]) -> Matrix {
        let mut m = match &self.projection {
            Some(u) => self.prototypes.matmul_t(u),
            None => self.prototypes.clone(),
        };
        let gn = l2_norm(embedding);
        let scales: Vec<f64> = m_row_norms(&self.prototypes)
            .into_iter()
            .map(|wn| {
                if gn == 0.0 || wn == 0.0 {
                    0.0
                } else {
                    1.0 / (self.temperature * wn * gn)
                }
            })
            .collect();
        m.scale_rows(&scales);
        m
    }
}

fn m_row_norms(m: &Matrix) -> Vec<f64> {
    m.row_iter().map(l2_norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_follow_the_spec() {
        let spec = MlpSpec::new(vec![4, 8, 8], Activation::Relu, 3);
        let m = build_mlp(&spec, &mut Rng::new(1)).unwrap();
        assert_eq!(m.weight(1).shape(), (4, 8));
        assert_eq!(m.weight(2).shape(), (8, 8));
        assert_eq!(m.prototypes().shape(), (3, 8));
        for k in 0..3 {
            assert!((l2_norm(m.prototypes().row(k)) - 1.0).abs() < 1e-12);
        }
        let bound = (6.0f64 / 4.0).sqrt();
        assert!(m.weight(1).as_slice().iter().all(|w| w.abs() < bound));
    }

    #[test]
    fn same_seed_same_model() {
        let spec = MlpSpec::new(vec![5, 7, 6], Activation::Gelu, 4);
        let a = build_mlp(&spec, &mut Rng::new(42)).unwrap();
        let b = build_mlp(&spec, &mut Rng::new(42)).unwrap();
        assert_eq!(a, b);
        let c = build_mlp(&spec, &mut Rng::new(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = MlpSpec::new(vec![4, 8], Activation::Relu, 2);
        spec.temperature = 0.0;
        assert!(build_mlp(&spec, &mut Rng::new(0)).is_err());
        let spec = MlpSpec::new(vec![4], Activation::Relu, 2);
        assert!(build_mlp(&spec, &mut Rng::new(0)).is_err());
        let spec = MlpSpec::new(vec![4, 0, 3], Activation::Relu, 2);
        assert!(build_mlp(&spec, &mut Rng::new(0)).is_err());
        let spec = MlpSpec::new(vec![4, 3], Activation::LeakyRelu { slope: 2.0 }, 2);
        assert!(build_mlp(&spec, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn from_parts_checks_shapes() {
        let w1 = Matrix::zeros(2, 3);
        let w2 = Matrix::zeros(4, 2);
        let p = Matrix::identity(2);
        assert!(MlpModel::from_parts(vec![w1, w2], None, None, p, 1.0, Activation::Relu, false).is_err());
    }
}
