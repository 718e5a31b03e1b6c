//! Mean cross-entropy over the cosine logits and its exact gradient.

use super::forward::forward;
use super::model::MlpModel;
use crate::error::{invalid, Error, Result};
use crate::numcore::{dot, l2_norm, logsumexp, Matrix};

/// Gradient (or any other quantity) shaped like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Option<Vec<Vec<f64>>>,
    pub projection: Option<Matrix>,
    pub prototypes: Matrix,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases: model.biases.as_ref().map(|bs| bs.iter().map(|b| vec![0.0; b.len()]).collect()),
            projection: model.projection.as_ref().map(|u| Matrix::zeros(u.rows(), u.cols())),
            prototypes: Matrix::zeros(model.prototypes.rows(), model.prototypes.cols()),
        }
    }

    /// Parameter blocks in a fixed order: weights, biases, projection, prototypes.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.weights.iter().map(Matrix::as_slice).collect();
        if let Some(bs) = &self.biases {
            out.extend(bs.iter().map(Vec::as_slice));
        }
        if let Some(u) = &self.projection {
            out.push(u.as_slice());
        }
        out.push(self.prototypes.as_slice());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.weights.iter_mut().map(Matrix::as_mut_slice).collect();
        if let Some(bs) = &mut self.biases {
            out.extend(bs.iter_mut().map(Vec::as_mut_slice));
        }
        if let Some(u) = &mut self.projection {
            out.push(u.as_mut_slice());
        }
        out.push(self.prototypes.as_mut_slice());
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

impl MlpModel {
    /// Same block order as [`Gradients::slices`].
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.weights.iter().map(Matrix::as_slice).collect();
        if let Some(bs) = &self.biases {
            out.extend(bs.iter().map(Vec::as_slice));
        }
        if let Some(u) = &self.projection {
            out.push(u.as_slice());
        }
        out.push(self.prototypes.as_slice());
        out
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.weights.iter_mut().map(Matrix::as_mut_slice).collect();
        if let Some(bs) = &mut self.biases {
            out.extend(bs.iter_mut().map(Vec::as_mut_slice));
        }
        if let Some(u) = &mut self.projection {
            out.push(u.as_mut_slice());
        }
        out.push(self.prototypes.as_mut_slice());
        out
    }

    /// Which parameter blocks receive weight decay (everything except biases).
    pub(crate) fn decayed_blocks(&self) -> Vec<bool> {
        let mut out = vec![true; self.weights.len()];
        if let Some(bs) = &self.biases {
            out.extend(std::iter::repeat_n(false, bs.len()));
        }
        if self.projection.is_some() {
            out.push(true);
        }
        out.push(true);
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    /// Overwrites parameter `index` in flattened order.
    pub fn set_flat_param(&mut self, mut index: usize, value: f64) {
        for block in self.param_slices_mut() {
            if index < block.len() {
                block[index] = value;
                return;
            }
            index -= block.len();
        }
        panic!("parameter index out of range");
    }
}

/// Result of one batched forward/backward pass.
#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub loss: f64,
    pub correct: usize,
    pub grads: Gradients,
}

fn check_batch(model: &MlpModel, inputs: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if inputs.is_empty() {
        return Err(invalid("empty batch"));
    }
    if inputs.len() != labels.len() {
        return Err(invalid("inputs and labels differ in length"));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= model.num_classes()) {
        return Err(invalid(format!("label {y} out of range for {} classes", model.num_classes())));
    }
    if inputs.iter().any(|x| x.len() != model.input_dim()) {
        return Err(invalid("input dimension does not match the model"));
    }
    Ok(())
}

/// Mean cross-entropy of the cosine logits, evaluated sample by sample through
/// [`forward`]. Used as the reference value for gradient checks.
pub fn mean_loss(model: &MlpModel, inputs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_batch(model, inputs, labels)?;
    let mut total = 0.0;
    for (x, &y) in inputs.iter().zip(labels) {
        let t = forward(model, x)?;
        total += logsumexp(&t.logits) - t.logits[y];
    }
    Ok(total / inputs.len() as f64)
}

/// Analytic gradient of the mean cross-entropy over the batch.
pub fn backward(model: &MlpModel, inputs: &[Vec<f64>], labels: &[usize]) -> Result<BatchOutput> {
    check_batch(model, inputs, labels)?;
    let n = inputs.len();
    let depth = model.depth();
    let act = model.activation;

    let rows: Vec<Vec<f64>> = inputs.iter().map(|x| model.prepare_input(x)).collect();
    let mut acts: Vec<Matrix> = vec![Matrix::from_rows(&rows)?];
    let mut pres: Vec<Matrix> = Vec::with_capacity(depth);
    for l in 1..=depth {
        let mut z = acts[l - 1].matmul(model.weight(l));
        if let Some(b) = model.bias(l) {
            for i in 0..n {
                z.row_mut(i).iter_mut().zip(b).for_each(|(zi, bi)| *zi += bi);
            }
        }
        let a = z.map(|v| act.apply(v));
        pres.push(z);
        acts.push(a);
    }
    let last = &acts[depth];
    let g = match &model.projection {
        Some(u) => last.matmul(u),
        None => last.clone(),
    };

    let k = model.num_classes();
    let t = model.temperature;
    let proto_norms: Vec<f64> = model.prototypes.row_iter().map(l2_norm).collect();
    let unit_protos = {
        let mut p = model.prototypes.clone();
        let inv: Vec<f64> = proto_norms.iter().map(|&w| if w > 0.0 { 1.0 / w } else { 0.0 }).collect();
        p.scale_rows(&inv);
        p
    };
    let g_norms: Vec<f64> = g.row_iter().map(l2_norm).collect();
    let mut unit_g = g.clone();
    let inv_g: Vec<f64> = g_norms.iter().map(|&v| if v > 0.0 { 1.0 / v } else { 0.0 }).collect();
    unit_g.scale_rows(&inv_g);

    // logits = ĝ Ŵᵀ / T
    let mut logits = unit_g.matmul_t(&unit_protos);
    logits.as_mut_slice().iter_mut().for_each(|v| *v /= t);

    let mut loss = 0.0;
    let mut correct = 0;
    let mut delta = Matrix::zeros(n, k);
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let lse = logsumexp(row);
        loss += lse - row[y];
        if crate::numcore::argmax(row) == y {
            correct += 1;
        }
        let d = delta.row_mut(i);
        for (c, v) in d.iter_mut().enumerate() {
            *v = (row[c] - lse).exp() / n as f64;
        }
        d[y] -= 1.0 / n as f64;
    }
    loss /= n as f64;
    if !loss.is_finite() {
        return Err(Error::NumericalFailure(format!("non-finite loss {loss}")));
    }

    // d loss / d ĝ and d loss / d ŵ
    let mut d_unit_g = delta.matmul(&unit_protos);
    d_unit_g.as_mut_slice().iter_mut().for_each(|v| *v /= t);
    let mut d_unit_w = delta.t_matmul(&unit_g);
    d_unit_w.as_mut_slice().iter_mut().for_each(|v| *v /= t);

    let mut grads = Gradients::zeros_like(model);
    // Back through w/‖w‖: (u − (u·ŵ)ŵ)/‖w‖
    for c in 0..k {
        let wn = proto_norms[c];
        if wn == 0.0 {
            continue;
        }
        let w_hat = unit_protos.row(c);
        let u = d_unit_w.row(c);
        let proj = dot(u, w_hat);
        for ((o, &ui), &wi) in grads.prototypes.row_mut(c).iter_mut().zip(u).zip(w_hat) {
            *o = (ui - proj * wi) / wn;
        }
    }
    let mut d_g = Matrix::zeros(n, g.cols());
    for i in 0..n {
        let gn = g_norms[i];
        if gn == 0.0 {
            continue;
        }
        let g_hat = unit_g.row(i);
        let u = d_unit_g.row(i);
        let proj = dot(u, g_hat);
        for ((o, &ui), &gi) in d_g.row_mut(i).iter_mut().zip(u).zip(g_hat) {
            *o = (ui - proj * gi) / gn;
        }
    }

    let mut d_a = match &model.projection {
        Some(u) => {
            grads.projection = Some(last.t_matmul(&d_g));
            d_g.matmul_t(u)
        }
        None => d_g,
    };

    for l in (1..=depth).rev() {
        let z = &pres[l - 1];
        let mut d_z = d_a;
        for (dz, &zv) in d_z.as_mut_slice().iter_mut().zip(z.as_slice()) {
            *dz *= act.derivative(zv);
        }
        grads.weights[l - 1] = acts[l - 1].t_matmul(&d_z);
        if let Some(bs) = &mut grads.biases {
            let b = &mut bs[l - 1];
            for row in d_z.row_iter() {
                b.iter_mut().zip(row).for_each(|(s, v)| *s += v);
            }
        }
        d_a = if l > 1 { d_z.matmul_t(model.weight(l)) } else { d_z };
    }

    Ok(BatchOutput { loss, correct, grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_mlp, Activation, MlpSpec};
    use crate::numcore::Rng;

    #[test]
    fn batched_loss_matches_per_sample_loss() {
        let mut spec = MlpSpec::new(vec![4, 6, 5], Activation::LeakyRelu { slope: 0.1 }, 3);
        spec.use_bias = true;
        let model = build_mlp(&spec, &mut Rng::new(2)).unwrap();
        let mut rng = Rng::new(3);
        let xs: Vec<Vec<f64>> = (0..7).map(|_| rng.normal_vec(4)).collect();
        let ys = vec![0, 1, 2, 0, 1, 2, 0];
        let out = backward(&model, &xs, &ys).unwrap();
        let reference = mean_loss(&model, &xs, &ys).unwrap();
        assert!((out.loss - reference).abs() < 1e-12);
    }

    #[test]
    fn bad_batches() {
        let spec = MlpSpec::new(vec![2, 3], Activation::Relu, 2);
        let model = build_mlp(&spec, &mut Rng::new(0)).unwrap();
        assert!(backward(&model, &[], &[]).is_err());
        assert!(backward(&model, &[vec![1.0, 2.0]], &[2]).is_err());
        assert!(backward(&model, &[vec![1.0]], &[0]).is_err());
    }

    #[test]
    fn flat_params_roundtrip() {
        let mut spec = MlpSpec::new(vec![2, 3], Activation::Relu, 2);
        spec.use_bias = true;
        spec.embedding_dim = Some(2);
        let mut model = build_mlp(&spec, &mut Rng::new(0)).unwrap();
        let n = model.num_params();
        assert_eq!(n, 6 + 3 + 6 + 4);
        model.set_flat_param(n - 1, 7.5);
        assert_eq!(model.prototypes()[(1, 1)], 7.5);
        assert_eq!(Gradients::zeros_like(&model).flatten().len(), n);
    }
}
