//! Random-network sweep of the logit decomposition and the binarization bound.

use oodlab_core::hidden::{
    approx_error, coefficient_matrix_with, pre_activation_classifier_with, HiddenClassifier,
};
use oodlab_core::net::{activation_ratio, build_mlp, forward, Activation, MlpModel, MlpSpec};
use oodlab_core::numcore::{sign_vec, Rng};
use serde::Serialize;

use crate::error::{CliError, Result, StageExt};

pub const DECOMPOSITION_TOL: f64 = 1e-9;
pub const BOUND_TOL: f64 = 1e-9;
pub const EQUALITY_TOL: f64 = 1e-12;

pub const DEPTHS: [usize; 3] = [2, 3, 5];

pub fn activations() -> [Activation; 3] {
    [Activation::Relu, Activation::LeakyRelu { slope: 0.1 }, Activation::Gelu]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Fault {
    /// Use the derivative instead of `σ(z)/z` for GeLU layers.
    pub wrong_gelu_ratio: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: String,
    pub depth: usize,
    pub layer: usize,
    pub activation: String,
    pub bias: bool,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub samples: usize,
    pub networks: usize,
    /// `max |ψ − (C x_l + Γ)| / (1 + |ψ|)` over post- and pre-activation sites.
    pub max_decomposition_residual: f64,
    /// Largest `(‖a‖₁ − ψ̄_k) − bound`; non-positive when the bound holds.
    pub max_bound_excess: f64,
    /// Smallest `‖a‖₁ − ψ̄_k`; non-negative when the lower side holds.
    pub min_gap: f64,
    /// Largest `|‖a‖₁ − ψ̄_k|` over classes whose row matches `sign(a)`.
    pub max_equality_residual: f64,
    pub equality_cases: usize,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn activation_label(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "ReLU",
        Activation::LeakyRelu { .. } => "LeakyReLU",
        Activation::Gelu => "GeLU",
    }
}

fn random_net(depth: usize, act: Activation, bias: bool, rng: &mut Rng) -> Result<MlpModel> {
    let mut dims = vec![6];
    dims.extend((0..depth).map(|l| 7 + (l * 3) % 5));
    let mut spec = MlpSpec::new(dims, act, 4);
    spec.use_bias = bias;
    let m = build_mlp(&spec, rng).stage("verify")?;
    let biases = bias.then(|| {
        m.dims()[1..]
            .iter()
            .map(|&d| (0..d).map(|_| 0.3 * rng.normal()).collect())
            .collect()
    });
    MlpModel::from_parts(
        m.weights().to_vec(),
        biases,
        m.projection().cloned(),
        m.prototypes().clone(),
        m.temperature(),
        m.activation(),
        m.normalizes_input(),
    )
    .stage("verify")
}

fn faulty_ratio(fault: Fault) -> impl Fn(&[f64], Activation) -> Vec<f64> {
    move |z: &[f64], act: Activation| match act {
        Activation::Gelu if fault.wrong_gelu_ratio => z.iter().map(|&x| act.derivative(x)).collect(),
        _ => activation_ratio(z, act),
    }
}

fn residual(logits: &[f64], recon: &[f64]) -> f64 {
    logits
        .iter()
        .zip(recon)
        .map(|(p, q)| (p - q).abs() / (1.0 + p.abs()))
        .fold(0.0, f64::max)
}

/// Runs the sweep: depths {2, 3, 5} × {ReLU, LeakyReLU, GeLU} × bias {off, on},
/// `samples` Gaussian inputs each, every layer.
pub fn run_verify(seed: u64, samples: usize, fault: Fault) -> Result<VerifyReport> {
    let root = Rng::new(seed);
    let ratio = faulty_ratio(fault);
    let mut report = VerifyReport {
        seed,
        samples,
        networks: 0,
        max_decomposition_residual: 0.0,
        max_bound_excess: f64::NEG_INFINITY,
        min_gap: f64::INFINITY,
        max_equality_residual: 0.0,
        equality_cases: 0,
        violations: Vec::new(),
    };
    for depth in DEPTHS {
        for act in activations() {
            for bias in [false, true] {
                let tag = format!("net-{depth}-{}-{bias}", act.name());
                let model = random_net(depth, act, bias, &mut root.split(&tag))?;
                report.networks += 1;
                let mut xr = root.split(&format!("{tag}-inputs"));
                let mut worst: Vec<Option<Violation>> = vec![None; 4];
                let mut note = |slot: usize, check: &str, layer: usize, value: f64| {
                    if worst[slot].as_ref().is_none_or(|v| value > v.value) {
                        worst[slot] = Some(Violation {
                            check: check.into(),
                            depth,
                            layer,
                            activation: activation_label(act).into(),
                            bias,
                            value,
                        });
                    }
                };
                for _ in 0..samples {
                    let x = xr.normal_vec(model.input_dim());
                    let trace = forward(&model, &x).stage("verify")?;
                    for l in 0..=depth {
                        let hc = coefficient_matrix_with(&model, &trace, l, &ratio).stage("verify")?;
                        let r = residual(&trace.logits, &hc.reconstruct(&trace).stage("verify")?);
                        report.max_decomposition_residual = report.max_decomposition_residual.max(r);
                        if !(r < DECOMPOSITION_TOL) {
                            note(0, "decomposition", l, r);
                        }
                        if l >= 1 {
                            let pre = pre_activation_classifier_with(&model, &trace, l, &ratio).stage("verify")?;
                            let r = residual(&trace.logits, &pre.reconstruct(&trace).stage("verify")?);
                            report.max_decomposition_residual = report.max_decomposition_residual.max(r);
                            if !(r < DECOMPOSITION_TOL) {
                                note(0, "pre-activation decomposition", l, r);
                            }
                        }
                        check_bound(&trace, &hc, l, &mut report, &mut note)?;
                    }
                }
                report.violations.extend(worst.into_iter().flatten());
            }
        }
    }
    Ok(report)
}

fn check_bound(
    trace: &oodlab_core::net::ForwardTrace,
    hc: &HiddenClassifier,
    l: usize,
    report: &mut VerifyReport,
    note: &mut impl FnMut(usize, &str, usize, f64),
) -> Result<()> {
    let a = trace.a(l);
    let s = sign_vec(a);
    for k in 0..hc.num_classes() {
        let e = approx_error(trace, hc, k).stage("verify")?;
        report.min_gap = report.min_gap.min(e.error);
        report.max_bound_excess = report.max_bound_excess.max(e.error - e.bound);
        if e.error < -EQUALITY_TOL {
            note(1, "lower bound", l, -e.error);
        }
        if e.error > e.bound + BOUND_TOL {
            note(2, "upper bound", l, e.error - e.bound);
        }
        if hc.binary.row(k) == s.as_slice() {
            report.equality_cases += 1;
            report.max_equality_residual = report.max_equality_residual.max(e.error.abs());
            if e.error.abs() > EQUALITY_TOL {
                note(3, "equality", l, e.error.abs());
            }
        }
    }
    Ok(())
}

/// Turns a failed report into the error carrying the offending triples.
pub fn into_result(report: VerifyReport) -> Result<VerifyReport> {
    if report.passed() {
        return Ok(report);
    }
    let lines: Vec<String> = report
        .violations
        .iter()
        .map(|v| {
            format!(
                "{} at layer {} (activation {}, bias {}, depth {}): {:.3e}",
                v.check,
                v.layer,
                v.activation,
                if v.bias { "on" } else { "off" },
                v.depth,
                v.value
            )
        })
        .collect();
    Err(CliError::Verification(lines.join("; ")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_sweep_passes() {
        let r = run_verify(1, 10, Fault::default()).unwrap();
        assert!(r.passed(), "{:?}", r.violations);
        assert_eq!(r.networks, 18);
        assert!(r.max_decomposition_residual < DECOMPOSITION_TOL);
        assert!(r.min_gap >= -EQUALITY_TOL);
    }

    #[test]
    fn gelu_fault_is_reported_for_gelu_only() {
        let r = run_verify(1, 5, Fault { wrong_gelu_ratio: true }).unwrap();
        assert!(!r.passed());
        assert!(r.violations.iter().all(|v| v.activation == "GeLU"));
        let err = into_result(r).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(err.to_string().contains("GeLU"));
    }
}
