//! Training loop contracts: determinism, the closed-form constant predictor,
//! a reduced preset that learns, and the early-stopping rule.

use proptest::prelude::*;
use rlab_core::calo::{Dataset, DatasetKind, GeneratorConfig};
use rlab_core::nn::{Model, ModelSpec, Preset};
use rlab_core::optim::{OptimizerConfig, OptimizerKind};
use rlab_core::training::{evaluate, relative_rmse, should_stop, train_instance, train_model, EarlyStopConfig, TrainConfig};

fn short(min_epochs: usize, window: usize, hard_cap: usize) -> TrainConfig {
    TrainConfig {
        early_stop: EarlyStopConfig { min_epochs, window, threshold: 0.10, hard_cap },
        keep_weights: true,
        ..TrainConfig::default()
    }
}

fn tiny_spec() -> ModelSpec {
    Preset::Model2.spec().with_filters(&[2, 2]).unwrap()
}

/// Minimizer of Σ (c/t − 1)² over the targets.
fn optimal_constant(data: &Dataset) -> f64 {
    let (a, b) = data.records.iter().fold((0.0, 0.0), |(a, b), r| (a + 1.0 / r.energy, b + 1.0 / (r.energy * r.energy)));
    a / b
}

#[test]
fn reruns_are_bitwise_identical() {
    let data = Dataset::generate(GeneratorConfig::new(DatasetKind::A), 120, 1).unwrap();
    let (test, train) = data.split_fixed(0.25, 2).unwrap();
    let mut spec = tiny_spec();
    spec.batch_size = 16;
    let cfg = short(5, 3, 8);
    let a = train_instance(&spec, &train, &test, 77, &cfg).unwrap();
    let b = train_instance(&spec, &train, &test, 77, &cfg).unwrap();
    assert_eq!(a.loss_trace.len(), b.loss_trace.len());
    assert!(a.loss_trace.iter().zip(&b.loss_trace).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a.weights, b.weights);
    let c = train_instance(&spec, &train, &test, 78, &cfg).unwrap();
    assert_ne!(a.loss_trace, c.loss_trace);
}

#[test]
fn constant_predictor_reaches_the_optimal_constant() {
    let data = Dataset::generate(GeneratorConfig::new(DatasetKind::A), 300, 3).unwrap();
    let mut spec = tiny_spec();
    spec.optimizer = OptimizerConfig::new(OptimizerKind::Adam, 0.1);
    spec.batch_size = data.len();
    let c = optimal_constant(&data);
    let truth: Vec<f64> = data.records.iter().map(|r| r.energy).collect();
    let best = relative_rmse(&vec![c; truth.len()], &truth).unwrap();

    let model = Model::constant_predictor(spec, 10.0).unwrap();
    let run = train_model(model, &data, &data, 0, &short(100, 30, 300)).unwrap();
    assert!(!run.diverged);
    let last = *run.loss_trace.last().unwrap();
    assert!((last - best).abs() < 1e-3, "trace ends at {last} after {} epochs, optimum {best} (c = {c})", run.stop_epoch);
    assert!(run.loss_trace[0] > best + 1e-2);
}

#[test]
fn reduced_model2_beats_the_constant_predictor() {
    let data = Dataset::generate(GeneratorConfig::new(DatasetKind::A), 2000, 4).unwrap();
    let (test, train) = data.split_fixed(0.2, 5).unwrap();
    let spec = Preset::Model2.spec().with_filters(&[8, 16]).unwrap();
    let run = train_instance(&spec, &train, &test, 6, &short(20, 10, 40)).unwrap();

    let c = optimal_constant(&train);
    let truth: Vec<f64> = test.records.iter().map(|r| r.energy).collect();
    let constant = relative_rmse(&vec![c; truth.len()], &truth).unwrap();
    assert!(run.final_test_loss < constant, "{} vs constant {constant}", run.final_test_loss);
}

#[test]
fn final_loss_is_a_fresh_evaluation_at_the_stop_weights() {
    let data = Dataset::generate(GeneratorConfig::new(DatasetKind::A), 150, 7).unwrap();
    let (test, train) = data.split_fixed(0.3, 8).unwrap();
    let spec = tiny_spec();
    for cfg in [short(6, 3, 10), TrainConfig { validation_fraction: Some(0.2), ..short(6, 3, 10) }] {
        let run = train_instance(&spec, &train, &test, 9, &cfg).unwrap();
        assert_eq!(run.stop_epoch, run.loss_trace.len());
        let mut model = Model::new(spec.clone(), 9).unwrap();
        for (p, w) in model.params_mut().iter_mut().zip(run.weights.as_ref().unwrap()) {
            p.data_mut().copy_from_slice(w.data());
        }
        let fresh = evaluate(&model, &test, 64).unwrap();
        assert_eq!(fresh.to_bits(), run.final_test_loss.to_bits());
    }
}

#[test]
fn divergence_is_flagged_not_raised() {
    let data = Dataset::generate(GeneratorConfig::new(DatasetKind::A), 64, 10).unwrap();
    let mut spec = tiny_spec();
    spec.optimizer = OptimizerConfig::new(OptimizerKind::SGD, 1e300);
    spec.batch_size = 8;
    let run = train_instance(&spec, &data, &data, 1, &short(5, 3, 20)).unwrap();
    assert!(run.diverged);
    assert_eq!(run.final_test_loss, f64::INFINITY);
    assert!(!run.loss_trace.is_empty());
}

fn stop_cfg(min_epochs: usize, window: usize, threshold: f64) -> EarlyStopConfig {
    EarlyStopConfig { min_epochs, window, threshold, hard_cap: 10_000 }
}

proptest! {
    #[test]
    fn never_fires_before_min_epochs(trace in prop::collection::vec(0.01f64..100.0, 1..200), window in 1usize..40) {
        let cfg = stop_cfg(100.max(window), window, 0.1);
        for end in 1..=trace.len().min(cfg.min_epochs - 1) {
            prop_assert!(!should_stop(&trace[..end], &cfg));
        }
    }

    #[test]
    fn monotone_in_threshold(trace in prop::collection::vec(0.5f64..2.0, 40..80), t in 0.01f64..1.0, shrink in 0.0f64..1.0) {
        let hi = stop_cfg(30, 10, t);
        let lo = stop_cfg(30, 10, t * shrink.max(1e-3));
        if should_stop(&trace, &hi) {
            prop_assert!(should_stop(&trace, &lo));
        }
    }
}
