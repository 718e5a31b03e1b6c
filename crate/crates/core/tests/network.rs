//! Forward traces, gradients and the hidden-classifier identities on random networks.

use oodlab_core::hidden::{approx_error, coefficient_matrix, hidden_logits, pre_activation_classifier};
use oodlab_core::net::{backward, build_mlp, forward, mean_loss, Activation, MlpModel, MlpSpec};
use oodlab_core::numcore::{l1_norm, sign_vec, Rng};
use proptest::prelude::*;

const ACTIVATIONS: [Activation; 3] = [Activation::Relu, Activation::LeakyRelu { slope: 0.05 }, Activation::Gelu];

fn random_model(seed: u64, act: Activation, bias: bool, depth: usize, embed: Option<usize>) -> MlpModel {
    let mut rng = Rng::new(seed);
    let mut dims = vec![5];
    dims.extend((0..depth).map(|_| 4 + rng.below(5)));
    let mut spec = MlpSpec::new(dims, act, 3);
    spec.use_bias = bias;
    spec.embedding_dim = embed;
    let mut m = build_mlp(&spec, &mut rng).unwrap();
    if bias {
        let start: usize = m.weights().iter().map(|w| w.rows() * w.cols()).sum();
        let n_bias: usize = m.dims()[1..].iter().sum();
        let flat = m.flat_params();
        for j in start..start + n_bias {
            m.set_flat_param(j, flat[j] + 0.3 * rng.normal());
        }
    }
    m
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs())
}

#[test]
fn gradients_match_central_differences() {
    for (i, act) in ACTIVATIONS.into_iter().enumerate() {
        for bias in [false, true] {
            let model = random_model(40 + i as u64, act, bias, 2, Some(3));
            let mut rng = Rng::new(7);
            let xs: Vec<Vec<f64>> = (0..5).map(|_| rng.normal_vec(5)).collect();
            let ys = vec![0, 1, 2, 1, 0];
            let grad = backward(&model, &xs, &ys).unwrap().grads.flatten();
            let params = model.flat_params();
            for (j, &g) in grad.iter().enumerate() {
                let (mut up, mut down) = (model.clone(), model.clone());
                up.set_flat_param(j, params[j] + 1e-5);
                down.set_flat_param(j, params[j] - 1e-5);
                let fd = (mean_loss(&up, &xs, &ys).unwrap() - mean_loss(&down, &xs, &ys).unwrap()) / 2e-5;
                let err = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
                assert!(err < 1e-4, "{act:?} bias {bias} param {j}: analytic {g}, numeric {fd}");
            }
        }
    }
}

#[test]
fn relu_pre_activation_classifier_is_exact() {
    let model = random_model(3, Activation::Relu, false, 3, None);
    let mut rng = Rng::new(4);
    for _ in 0..50 {
        let t = forward(&model, &rng.normal_vec(5)).unwrap();
        for l in 1..=3 {
            let post = coefficient_matrix(&model, &t, l).unwrap();
            let pre = pre_activation_classifier(&model, &t, l).unwrap();
            assert_eq!(post.coefficients.mat_vec(t.a(l)), pre.coefficients.mat_vec(t.z(l)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_is_consistent_and_bounded(seed in any::<u64>(), a in 0usize..3, bias: bool) {
        let act = ACTIVATIONS[a];
        let model = random_model(seed, act, bias, 3, None);
        let x = Rng::new(seed ^ 1).normal_vec(5);
        let t = forward(&model, &x).unwrap();
        for l in 1..=model.depth() {
            for (ai, zi) in t.a(l).iter().zip(t.z(l)) {
                prop_assert_eq!(*ai, act.apply(*zi));
            }
        }
        let bound = 1.0 / model.temperature();
        prop_assert!(t.logits.iter().all(|v| v.abs() <= bound * (1.0 + 1e-12)));
        prop_assert_eq!(forward(&model, &x).unwrap(), t);
    }

    #[test]
    fn decomposition_and_binarization_bound(seed in any::<u64>(), a in 0usize..3, bias: bool, depth in 1usize..5) {
        let model = random_model(seed, ACTIVATIONS[a], bias, depth, None);
        let x = Rng::new(seed ^ 2).normal_vec(5);
        let t = forward(&model, &x).unwrap();
        for l in 0..=depth {
            let hc = coefficient_matrix(&model, &t, l).unwrap();
            for (p, q) in t.logits.iter().zip(hc.reconstruct(&t).unwrap()) {
                prop_assert!(rel(*p, q) < 1e-9);
            }
            if l >= 1 {
                let pre = pre_activation_classifier(&model, &t, l).unwrap();
                for (p, q) in t.logits.iter().zip(pre.reconstruct(&t).unwrap()) {
                    prop_assert!(rel(*p, q) < 1e-9);
                }
            }
            let s = sign_vec(t.a(l));
            let hidden = hidden_logits(&hc, &t).unwrap();
            for k in 0..hc.num_classes() {
                let e = approx_error(&t, &hc, k).unwrap();
                prop_assert_eq!(e.error, l1_norm(t.a(l)) - hidden[k]);
                prop_assert!(e.error >= -1e-12);
                prop_assert!(e.error <= e.bound + 1e-9);
                if hc.binary.row(k) == s.as_slice() {
                    prop_assert!(e.error.abs() <= 1e-12);
                }
            }
        }
    }
}
