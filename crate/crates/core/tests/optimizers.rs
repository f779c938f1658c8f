//! Optimizer update rules checked against hand-derived closed forms.

use proptest::prelude::*;
use rlab_core::optim::{OptimizerConfig, OptimizerKind, OptimizerState};
use rlab_core::Tensor;

fn param(w: &[f64]) -> Tensor {
    Tensor::new(vec![w.len()], w.to_vec()).unwrap()
}

/// Runs `grads.len()` steps on one scalar parameter and returns its trajectory.
fn scalar_run(cfg: OptimizerConfig, w0: f64, grads: &[f64]) -> Vec<f64> {
    let mut p = [param(&[w0])];
    let mut st = OptimizerState::new(cfg, &p).unwrap();
    let mut out = Vec::new();
    for &g in grads {
        p[0].grad_mut()[0] = g;
        st.step(&mut p).unwrap();
        out.push(p[0].data()[0]);
    }
    out
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

#[test]
fn sgd_closed_form() {
    let w = scalar_run(OptimizerConfig::new(OptimizerKind::SGD, 0.1), 1.0, &[2.0]);
    assert!(close(w[0], 0.8), "{}", w[0]);
    let w = scalar_run(OptimizerConfig::new(OptimizerKind::SGD, 0.1).with_regularization(0.5), 1.0, &[2.0, -1.0]);
    let w1 = 1.0 - 0.1 * (2.0 + 0.5 * 1.0);
    let w2 = w1 - 0.1 * (-1.0 + 0.5 * w1);
    assert!(close(w[0], w1) && close(w[1], w2), "{w:?}");
}

#[test]
fn adam_first_and_second_step() {
    let w = scalar_run(OptimizerConfig::new(OptimizerKind::Adam, 0.001), 0.0, &[1.0]);
    assert!(close(w[0], -0.001 * (1.0 / (1.0 + 1e-8))), "{}", w[0]);

    let (lr, b1, b2, eps): (f64, f64, f64, f64) = (0.05, 0.9, 0.999, 1e-8);
    let (g1, g2): (f64, f64) = (0.4, -1.3);
    let w = scalar_run(OptimizerConfig::new(OptimizerKind::Adam, lr), 2.0, &[g1, g2]);
    // After two steps: m = (1-b1)(b1 g1 + g2), v = (1-b2)(b2 g1² + g2²).
    let s1 = 2.0 - lr * g1 / (g1.abs() + eps);
    let m2 = (1.0 - b1) * (b1 * g1 + g2) / (1.0 - b1 * b1);
    let v2 = (1.0 - b2) * (b2 * g1 * g1 + g2 * g2) / (1.0 - b2 * b2);
    let s2 = s1 - lr * m2 / (v2.sqrt() + eps);
    assert!(close(w[0], s1) && close(w[1], s2), "{w:?} vs {s1} {s2}");
}

#[test]
fn adamw_applies_decoupled_decay() {
    let (lr, wd, eps) = (0.01, 0.1, 1e-8);
    let cfg = OptimizerConfig::new(OptimizerKind::AdamW, lr).with_regularization(wd);
    let w = scalar_run(cfg, 2.0, &[0.5]);
    let expected = 2.0 - lr * 0.5 / (0.5 + eps) - lr * wd * 2.0;
    assert!(close(w[0], expected), "{} vs {expected}", w[0]);
}

#[test]
fn adagrad_closed_form() {
    let (lr, eps) = (0.1, 1e-10);
    let w = scalar_run(OptimizerConfig::new(OptimizerKind::AdaGrad, lr), 1.0, &[3.0, 4.0]);
    let s1 = 1.0 - lr * 3.0 / (3.0 + eps);
    let s2 = s1 - lr * 4.0 / (5.0 + eps);
    assert!(close(w[0], s1) && close(w[1], s2), "{w:?}");
}

#[test]
fn rmsprop_closed_form() {
    let (lr, a, eps) = (0.01, 0.99, 1e-8);
    let w = scalar_run(OptimizerConfig::new(OptimizerKind::RMSprop, lr), -1.0, &[2.0, 1.0]);
    let sq1: f64 = (1.0 - a) * 4.0;
    let s1 = -1.0 - lr * 2.0 / (sq1.sqrt() + eps);
    let sq2: f64 = a * sq1 + (1.0 - a) * 1.0;
    let s2 = s1 - lr * 1.0 / (sq2.sqrt() + eps);
    assert!(close(w[0], s1) && close(w[1], s2), "{w:?}");
}

#[test]
fn adamw_differs_from_adam_with_l2_on_zero_gradient() {
    let lr = 0.01;
    let adamw = scalar_run(OptimizerConfig::new(OptimizerKind::AdamW, lr).with_regularization(0.1), 1.0, &[0.0, 0.0]);
    let adam = scalar_run(OptimizerConfig::new(OptimizerKind::Adam, lr).with_regularization(0.1), 1.0, &[0.0, 0.0]);
    // Decoupled: pure shrink by lr·wd·w each step, the moments stay zero.
    assert!(close(adamw[0], 1.0 - lr * 0.1));
    assert!(close(adamw[1], adamw[0] * (1.0 - lr * 0.1)));
    // Coupled: the normalized step is about lr regardless of the penalty size.
    assert!((adam[0] - (1.0 - lr)).abs() < 1e-6);
    assert!((adam[1] - adamw[1]).abs() > 1e-3);
}

#[test]
fn every_kind_solves_the_unit_quadratic() {
    let target = [0.5; 4];
    for kind in OptimizerKind::ALL {
        let mut p = [param(&[0.0; 4])];
        let f = |w: &[f64]| w.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let f0 = f(p[0].data());
        let mut st = OptimizerState::new(OptimizerConfig::with_defaults(kind), &p).unwrap();
        for _ in 0..200 {
            let g: Vec<f64> = p[0].data().iter().zip(&target).map(|(w, t)| 2.0 * (w - t)).collect();
            p[0].grad_mut().copy_from_slice(&g);
            st.step(&mut p).unwrap();
        }
        let reduction = 1.0 - f(p[0].data()) / f0;
        assert!(reduction >= 0.9, "{kind:?} reduced only {reduction:.3}");
        assert_eq!(st.steps(), 200);
    }
}

#[test]
fn buffers_match_parameter_shapes() {
    let params = [Tensor::zeros(vec![2, 3]), Tensor::zeros(vec![5])];
    for kind in OptimizerKind::ALL {
        let st = OptimizerState::new(OptimizerConfig::with_defaults(kind), &params).unwrap();
        for (i, p) in params.iter().enumerate() {
            assert_eq!(st.buffers(i).len(), kind.buffers());
            assert!(st.buffers(i).iter().all(|b| b.len() == p.len() && b.iter().all(|&x| x == 0.0)));
        }
    }
}

proptest! {
    #[test]
    fn adam_and_adamw_agree_without_regularization(grads in prop::collection::vec(-5.0f64..5.0, 1..40), w0 in -3.0f64..3.0) {
        let a = scalar_run(OptimizerConfig::new(OptimizerKind::Adam, 0.01), w0, &grads);
        let b = scalar_run(OptimizerConfig::new(OptimizerKind::AdamW, 0.01), w0, &grads);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn steps_are_bitwise_deterministic(grads in prop::collection::vec(-5.0f64..5.0, 1..20), k in 0usize..7) {
        let kind = OptimizerKind::ALL[k];
        let a = scalar_run(OptimizerConfig::with_defaults(kind), 0.3, &grads);
        let b = scalar_run(OptimizerConfig::with_defaults(kind), 0.3, &grads);
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn step_counter_advances_by_one(n in 1usize..30) {
        let mut p = [param(&[1.0, 2.0])];
        let mut st = OptimizerState::new(OptimizerConfig::with_defaults(OptimizerKind::NAdam), &p).unwrap();
        for i in 0..n {
            p[0].grad_mut().copy_from_slice(&[0.1, -0.2]);
            st.step(&mut p).unwrap();
            prop_assert_eq!(st.steps(), i as u64 + 1);
        }
    }
}
