use approx::assert_abs_diff_eq;
use oodlab_core::numcore::{kmeans, lp_norm, percentile, softmax, Rng};
use proptest::prelude::*;

fn vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), -5.0..5.0f64], 1..40)
}

/// `‖x‖_q ≤ ‖x‖_p ≤ d^(1/p − 1/q) ‖x‖_q` for `p ≤ q`.
fn holder_excess(v: &[f64]) -> f64 {
    let d = v.len() as f64;
    let ps = [1.0, 1.5, 2.0, 3.0, f64::INFINITY];
    let mut worst: f64 = 0.0;
    for (i, &p) in ps.iter().enumerate() {
        for &q in &ps[i..] {
            let (np, nq) = (lp_norm(v, p).unwrap(), lp_norm(v, q).unwrap());
            let factor = d.powf(1.0 / p - 1.0 / q);
            let scale = 1.0 + np.max(nq);
            worst = worst.max((nq - np) / scale).max((np - factor * nq) / scale);
        }
    }
    worst
}

#[test]
fn holder_chain_on_a_thousand_vectors() {
    let mut rng = Rng::new(5);
    for _ in 0..1000 {
        let d = 1 + rng.below(64);
        let v: Vec<f64> = (0..d)
            .map(|_| if rng.bernoulli(0.25) { 0.0 } else { 3.0 * rng.normal() })
            .collect();
        assert!(holder_excess(&v) <= 1e-12);
    }
}

#[test]
fn kmeans_objective_never_increases() {
    for seed in 0..20 {
        let mut rng = Rng::new(seed);
        let pts: Vec<Vec<f64>> = (0..120).map(|i| {
            let c = (i % 4) as f64 * 3.0;
            vec![c + rng.normal(), -c + rng.normal(), rng.normal()]
        }).collect();
        let km = kmeans(&pts, 2 + (seed as usize % 4), &mut rng, 100).unwrap();
        for w in km.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "seed {seed}: {:?}", km.objective_history);
        }
    }
}

proptest! {
    #[test]
    fn holder_chain(v in vector()) {
        prop_assert!(holder_excess(&v) <= 1e-12);
    }

    #[test]
    fn softmax_sums_to_one_and_ignores_shifts(logits in prop::collection::vec(-30.0..30.0f64, 1..20), c in -100.0..100.0f64) {
        let p = softmax(&logits);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let shifted: Vec<f64> = logits.iter().map(|x| x + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn percentile_extremes(v in prop::collection::vec(-1e6..1e6f64, 1..50)) {
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(percentile(&v, 100.0).unwrap(), max);
        prop_assert_eq!(percentile(&v, 0.0).unwrap(), min);
    }
}
