use approx::assert_relative_eq;
use nalgebra::DVector;
use proptest::prelude::*;

use gaf::losses::{
    log_sum_exp, logistic_grad, logistic_hess_factor, logistic_value, sigma_plus, smooth, softmax, squared_grad,
    squared_value,
};
use gaf::{InputFeatures, SimplexVector};

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0..30.0f64, 2..8)
}

/// Features, label and parameter for `d′ ≤ 5`, `K ≤ 5`.
fn point() -> impl Strategy<Value = (InputFeatures, usize, DVector<f64>)> {
    (1usize..=5, 2usize..=5).prop_flat_map(|(dp, k)| {
        (
            prop::collection::vec(-1.0..1.0f64, dp),
            0..k,
            prop::collection::vec(-2.0..2.0f64, dp * k),
        )
            .prop_map(move |(x, y, th)| (InputFeatures::new(x, k, f64::INFINITY).unwrap(), y, DVector::from_vec(th)))
    })
}

proptest! {
    #[test]
    fn softmax_is_a_shift_invariant_distribution(z in logits(), c in -100.0..100.0f64) {
        let p = softmax(&z).unwrap();
        prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.as_slice().iter().all(|v| *v >= 0.0));
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let q = softmax(&shifted).unwrap();
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((log_sum_exp(&shifted) - log_sum_exp(&z) - c).abs() < 1e-9);
    }

    #[test]
    fn sigma_plus_inverts_softmax_on_the_interior(z in prop::collection::vec(-5.0..5.0f64, 2..8)) {
        let p = softmax(&z).unwrap();
        let back = softmax(&sigma_plus(&p).unwrap()).unwrap();
        for (a, b) in p.as_slice().iter().zip(back.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_floors_every_entry(z in logits(), mu in 0.0..0.5f64) {
        let p = softmax(&z).unwrap();
        let k = p.len() as f64;
        let s = smooth(&p, mu).unwrap();
        prop_assert!(s.as_slice().iter().all(|v| *v >= mu / k - 1e-15));
        prop_assert!((s.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for y in 0..p.len() {
            prop_assert!(s.log_loss(y).unwrap() <= (k / mu).ln() + 1e-12);
        }
    }

    #[test]
    fn logistic_gradient_matches_central_differences((feat, y, theta) in point()) {
        let g = logistic_grad(&feat, y, &theta).unwrap();
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (logistic_value(&feat, y, &tp).unwrap() - logistic_value(&feat, y, &tm).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "coordinate {}: {} vs {}", i, fd, g[i]);
        }
    }

    #[test]
    fn logistic_hessian_matches_gradient_differences((feat, y, theta) in point()) {
        let hess = logistic_hess_factor(&feat, &theta).unwrap().to_dense();
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let col = (logistic_grad(&feat, y, &tp).unwrap() - logistic_grad(&feat, y, &tm).unwrap()) / (2.0 * h);
            for j in 0..theta.len() {
                prop_assert!((col[j] - hess[(j, i)]).abs() <= 1e-4 * (1.0 + hess[(j, i)].abs()));
            }
        }
    }

    #[test]
    fn squared_gradient_is_exact(
        x in prop::collection::vec(-1.0..1.0f64, 1..6),
        y in -2.0..2.0f64,
        seed in prop::collection::vec(-2.0..2.0f64, 6),
    ) {
        let d = x.len();
        let x = DVector::from_vec(x);
        let theta = DVector::from_iterator(d, seed.into_iter().take(d));
        let g = squared_grad(&x, y, &theta).unwrap();
        let h = 1e-4;
        for i in 0..d {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (squared_value(&x, y, &tp).unwrap() - squared_value(&x, y, &tm).unwrap()) / (2.0 * h);
            // central differences are exact on quadratics up to round-off
            prop_assert!((fd - g[i]).abs() <= 1e-8 * (1.0 + g[i].abs()));
        }
    }
}

#[test]
fn zero_parameter_loss_is_log_k() {
    for k in 2..6 {
        let feat = InputFeatures::new(vec![0.3, -0.7], k, 1.0).unwrap();
        let theta = DVector::zeros(2 * k);
        assert_relative_eq!(logistic_value(&feat, 0, &theta).unwrap(), (k as f64).ln(), epsilon = 1e-14);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(InputFeatures::new(vec![2.0, 0.0], 3, 1.0).is_err());
    assert!(InputFeatures::new(vec![0.1], 0, 1.0).is_err());
    assert!(InputFeatures::new(vec![], 2, 1.0).is_err());
    assert!(SimplexVector::new(vec![0.5, 0.6]).is_err());
    assert!(SimplexVector::new(vec![1.5, -0.5]).is_err());
    let feat = InputFeatures::new(vec![0.1], 2, 1.0).unwrap();
    assert!(logistic_value(&feat, 2, &DVector::zeros(2)).is_err());
    assert!(logistic_value(&feat, 0, &DVector::zeros(3)).is_err());
    assert!(smooth(&SimplexVector::uniform(2), 0.7).is_err());
}
