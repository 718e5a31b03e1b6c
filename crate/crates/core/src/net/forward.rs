use serde::{Deserialize, Serialize};

use super::model::MlpModel;
use crate::error::{invalid, Result};

/// Everything one forward pass produces for a single input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    /// `a^(0)`: the input as seen by the first layer (after optional normalisation).
    pub input: Vec<f64>,
    /// `z^(1..=L)`, stored at index `l - 1`.
    pub pre: Vec<Vec<f64>>,
    /// `a^(1..=L)`, stored at index `l - 1`.
    pub post: Vec<Vec<f64>>,
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
}

impl ForwardTrace {
    pub fn depth(&self) -> usize {
        self.post.len()
    }

    /// `a^(l)` for `l = 0..=L`.
    pub fn a(&self, l: usize) -> &[f64] {
        if l == 0 {
            &self.input
        } else {
            &self.post[l - 1]
        }
    }

    /// `z^(l)` for `l = 1..=L`.
    pub fn z(&self, l: usize) -> &[f64] {
        &self.pre[l - 1]
    }

    /// `a^(L)`, where the feature-norm scores live.
    pub fn last_hidden(&self) -> &[f64] {
        self.post.last().expect("at least one hidden layer")
    }
}

pub fn forward(model: &MlpModel, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != model.input_dim() {
        return Err(invalid(format!(
            "input has dimension {}, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    let input = model.prepare_input(x);
    let mut pre = Vec::with_capacity(model.depth());
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(model.depth());
    for l in 1..=model.depth() {
        let prev = if l == 1 { &input } else { &post[l - 2] };
        let mut z = model.weight(l).t_mat_vec(prev);
        if let Some(b) = model.bias(l) {
            z.iter_mut().zip(b).for_each(|(zi, bi)| *zi += bi);
        }
        let act = model.activation();
        let a: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
        pre.push(z);
        post.push(a);
    }
    let embedding = model.embed(post.last().unwrap());
    let logits = model.cosine_logits(&embedding);
    Ok(ForwardTrace {
        input,
        pre,
        post,
        embedding,
        logits,
    })
}

/// Re-runs the head on a replacement last-hidden vector (used by ReAct).
pub fn with_last_hidden(model: &MlpModel, trace: &ForwardTrace, last_hidden: Vec<f64>) -> ForwardTrace {
    let mut out = trace.clone();
    out.embedding = model.embed(&last_hidden);
    out.logits = model.cosine_logits(&out.embedding);
    *out.post.last_mut().unwrap() = last_hidden;
    out
}
