//! The binarized hidden classifier of each layer and its diagnostics.
//!
//! For a trace of input `x`, the logits factor through every hidden layer as
//! `ψ(x) = C^(l) a^(l) + Γ(l, x)` where
//! `C^(l) = (Π W^(j+1)ᵀ D^(j+1)) … W^(l+1)ᵀ` and `D^(j) = diag(σ(z_i)/z_i)`.
//! The head's cosine normalisation is folded into `W^(L+1)ᵀ` via
//! [`MlpModel::head_matrix`], so the identity is exact for the trained model.
//! Binarizing gives the hidden classifier `ψ̄^(l) = sign(C^(l)) a^(l)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::net::{activation_ratio, forward, Activation, ForwardTrace, MlpModel};
use crate::numcore::{argmax, entropy, l1_norm, linf_norm, sign, softmax, Matrix};

/// Which vector of layer `l` the classifier acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Site {
    /// `a^(l)`
    PostActivation,
    /// `z^(l)`
    PreActivation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenClassifier {
    pub layer: usize,
    pub site: Site,
    /// `C^(l)` (or `Ĉ^(l)` for the pre-activation site), `K × d_l`.
    pub coefficients: Matrix,
    /// `sign(C)` entrywise, with `sign(0) = −1`.
    pub binary: Matrix,
    /// Bias aggregate `Γ(l, x)`; `None` for bias-free models.
    pub gamma: Option<Vec<f64>>,
    fingerprint: u64,
}

fn fingerprint(v: &[f64]) -> u64 {
    v.iter().fold(0xcbf2_9ce4_8422_2325u64 ^ v.len() as u64, |h, x| {
        (h ^ x.to_bits()).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

impl HiddenClassifier {
    /// The layer vector this classifier multiplies.
    pub fn feature<'t>(&self, trace: &'t ForwardTrace) -> &'t [f64] {
        match self.site {
            Site::PostActivation => trace.a(self.layer),
            Site::PreActivation => trace.z(self.layer),
        }
    }

    /// `C x_l (+ Γ)`: the model logits reconstructed from the layer vector.
    pub fn reconstruct(&self, trace: &ForwardTrace) -> Result<Vec<f64>> {
        let f = self.checked_feature(trace)?;
        let mut out = self.coefficients.mat_vec(f);
        if let Some(g) = &self.gamma {
            out.iter_mut().zip(g).for_each(|(o, gi)| *o += gi);
        }
        Ok(out)
    }

    fn checked_feature<'t>(&self, trace: &'t ForwardTrace) -> Result<&'t [f64]> {
        if self.layer > trace.depth() || (self.site == Site::PreActivation && self.layer == 0) {
            return Err(invalid("trace does not have the classifier's layer"));
        }
        let f = self.feature(trace);
        if f.len() != self.coefficients.cols() || fingerprint(f) != self.fingerprint {
            return Err(invalid("hidden classifier was computed from a different trace"));
        }
        Ok(f)
    }

    pub fn num_classes(&self) -> usize {
        self.binary.rows()
    }
}

fn check_layer(model: &MlpModel, trace: &ForwardTrace, l: usize, min: usize) -> Result<()> {
    if trace.depth() != model.depth() {
        return Err(invalid("trace depth does not match the model"));
    }
    if l < min || l > model.depth() {
        return Err(invalid(format!(
            "layer {l} outside {min}..={} for this model",
            model.depth()
        )));
    }
    Ok(())
}

/// Diagonal of `D^(j)` from `z^(j)`.
pub type RatioFn = dyn Fn(&[f64], Activation) -> Vec<f64>;

/// Walks from the head down to layer `l`, returning `C^(l)` and `Γ(l)`.
fn coefficients_down_to(
    model: &MlpModel,
    trace: &ForwardTrace,
    l: usize,
    ratio: &RatioFn,
) -> (Matrix, Option<Vec<f64>>) {
    let mut c = model.head_matrix(&trace.embedding);
    let mut gamma = model.has_bias().then(|| vec![0.0; model.num_classes()]);
    for j in (l + 1..=model.depth()).rev() {
        // Ĉ^(j) = C^(j) D^(j)
        c.scale_cols(&ratio(trace.z(j), model.activation()));
        if let (Some(g), Some(b)) = (gamma.as_mut(), model.bias(j)) {
            for (gk, v) in g.iter_mut().zip(c.mat_vec(b)) {
                *gk += v;
            }
        }
        // C^(j-1) = Ĉ^(j) W^(j)ᵀ
        c = c.matmul_t(model.weight(j));
    }
    (c, gamma)
}

fn binarize(c: &Matrix) -> Matrix {
    c.map(sign)
}

/// `C^(l)` with `ψ(x) = C^(l) a^(l) + Γ(l)`, for `0 ≤ l ≤ L`.
pub fn coefficient_matrix(model: &MlpModel, trace: &ForwardTrace, l: usize) -> Result<HiddenClassifier> {
    coefficient_matrix_with(model, trace, l, &activation_ratio)
}

/// [`coefficient_matrix`] with a caller-supplied `D^(j)`; used to inject faults.
pub fn coefficient_matrix_with(
    model: &MlpModel,
    trace: &ForwardTrace,
    l: usize,
    ratio: &RatioFn,
) -> Result<HiddenClassifier> {
    check_layer(model, trace, l, 0)?;
    let (coefficients, gamma) = coefficients_down_to(model, trace, l, ratio);
    Ok(HiddenClassifier {
        layer: l,
        site: Site::PostActivation,
        binary: binarize(&coefficients),
        coefficients,
        gamma,
        fingerprint: fingerprint(trace.a(l)),
    })
}

/// `Ĉ^(l) = C^(l) D^(l)` with `ψ(x) = Ĉ^(l) z^(l) + Γ(l)`, for `1 ≤ l ≤ L`.
pub fn pre_activation_classifier(model: &MlpModel, trace: &ForwardTrace, l: usize) -> Result<HiddenClassifier> {
    pre_activation_classifier_with(model, trace, l, &activation_ratio)
}

pub fn pre_activation_classifier_with(
    model: &MlpModel,
    trace: &ForwardTrace,
    l: usize,
    ratio: &RatioFn,
) -> Result<HiddenClassifier> {
    check_layer(model, trace, l, 1)?;
    let (mut coefficients, gamma) = coefficients_down_to(model, trace, l, ratio);
    coefficients.scale_cols(&ratio(trace.z(l), model.activation()));
    Ok(HiddenClassifier {
        layer: l,
        site: Site::PreActivation,
        binary: binarize(&coefficients),
        coefficients,
        gamma,
        fingerprint: fingerprint(trace.z(l)),
    })
}

/// `ψ̄ = B x_l`
pub fn hidden_logits(hc: &HiddenClassifier, trace: &ForwardTrace) -> Result<Vec<f64>> {
    let f = hc.checked_feature(trace)?;
    Ok(hc.binary.mat_vec(f))
}

/// Gap between the feature norm and the hidden logit of class `k`, with its bound:
/// `0 ≤ ‖a‖₁ − ψ̄_k ≤ ‖a‖_∞ ‖sign(a) − b_k‖₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxError {
    pub error: f64,
    pub bound: f64,
}

pub fn approx_error(trace: &ForwardTrace, hc: &HiddenClassifier, k: usize) -> Result<ApproxError> {
    let a = hc.checked_feature(trace)?;
    if k >= hc.num_classes() {
        return Err(invalid(format!("class {k} out of range")));
    }
    let b = hc.binary.row(k);
    let error = l1_norm(a) - crate::numcore::dot(b, a);
    let bound = linf_norm(a) * sign_difference(a, b);
    Ok(ApproxError { error, bound })
}

/// `‖sign(a) − b‖₁`
pub fn sign_difference(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &bi)| (sign(x) - bi).abs()).sum()
}

/// Averages over a labeled set for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenDiagnostics {
    pub layer: usize,
    pub hidden_accuracy: f64,
    pub mean_prediction_entropy: f64,
    pub mean_sign_difference_target: f64,
    pub mean_normalized_error_target: f64,
    pub mean_normalized_error_nontarget: f64,
}

/// Normalized errors divide by `max(‖a‖₁, 1e-12)`.
pub fn hidden_diagnostics(
    model: &MlpModel,
    features: &[Vec<f64>],
    labels: &[usize],
    l: usize,
) -> Result<HiddenDiagnostics> {
    if features.len() != labels.len() {
        return Err(invalid("features and labels differ in length"));
    }
    let k = model.num_classes();
    let mut acc = 0.0;
    let mut ent = 0.0;
    let mut sd = 0.0;
    let mut err_t = 0.0;
    let mut err_nt = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        if y >= k {
            return Err(invalid(format!("label {y} out of range for {k} classes")));
        }
        let trace = forward(model, x)?;
        let hc = coefficient_matrix(model, &trace, l)?;
        let a = trace.a(l);
        let logits = hc.binary.mat_vec(a);
        let norm = l1_norm(a);
        let denom = norm.max(1e-12);
        if argmax(&logits) == y {
            acc += 1.0;
        }
        ent += entropy(&softmax(&logits));
        sd += sign_difference(a, hc.binary.row(y));
        err_t += (norm - logits[y]) / denom;
        if k > 1 {
            let others: f64 = (0..k).filter(|&c| c != y).map(|c| (norm - logits[c]) / denom).sum();
            err_nt += others / (k - 1) as f64;
        }
    }
    let n = features.len().max(1) as f64;
    Ok(HiddenDiagnostics {
        layer: l,
        hidden_accuracy: acc / n,
        mean_prediction_entropy: ent / n,
        mean_sign_difference_target: sd / n,
        mean_normalized_error_target: err_t / n,
        mean_normalized_error_nontarget: err_nt / n,
    })
}
