use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::augment::{build_adjacency, AdjacencyOpts, GraphSample};

fn sample(rng: &mut ChaCha8Rng, start: usize, n: usize, t: usize, targets: usize) -> GraphSample {
    let x: Vec<f64> = (0..n * t).map(|_| rng.random_range(0.0..1.0)).collect();
    let adjacency = build_adjacency(&x, n, t, &AdjacencyOpts::default()).unwrap();
    GraphSample {
        start,
        n_nodes: n,
        window: t,
        x,
        adjacency,
        y: (0..targets).map(|_| rng.random_range(0.0..1.0)).collect(),
    }
}

fn small_config(arch: Architecture, t: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        architecture: arch,
        graph_hidden: 3,
        mlp_hidden: 6,
        heads: 2,
        cheb_order: 3,
        window: t,
        cnn_channels: 2,
        seed,
        ..ModelConfig::default()
    }
}

#[test]
fn prediction_shape_for_every_architecture() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<GraphSample> = (0..5).map(|k| sample(&mut rng, k, 4, 6, 3)).collect();
    let refs: Vec<&GraphSample> = samples.iter().collect();
    let batch = GraphBatch::from_samples(&refs).unwrap();
    for arch in Architecture::ALL {
        for x_skip in [false, true] {
            let cfg = ModelConfig {
                x_skip,
                ..small_config(arch, 6, 0)
            };
            let model = Model::new(&cfg, 4, 3).unwrap();
            let y = model.predict(&batch).unwrap();
            assert_eq!(y.shape(), (5, 3), "{arch}");
            assert!(y.is_finite());
        }
    }
}

#[test]
fn target_count_mismatch_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = sample(&mut rng, 0, 4, 6, 3);
    let batch = GraphBatch::from_samples(&[&s]).unwrap();
    let model = Model::new(&small_config(Architecture::Gatv2, 6, 0), 4, 2).unwrap();
    let err = model.predict(&batch).unwrap_err().to_string();
    assert!(err.contains("3 targets"), "{err}");
}

#[test]
fn batched_forward_equals_per_sample_forwards() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<GraphSample> = (0..4).map(|k| sample(&mut rng, k, 5, 4, 2)).collect();
    let refs: Vec<&GraphSample> = samples.iter().collect();
    let batch = GraphBatch::from_samples(&refs).unwrap();
    for arch in Architecture::ALL {
        let model = Model::new(&small_config(arch, 4, 7), 5, 2).unwrap();
        let all = model.predict(&batch).unwrap();
        for (b, s) in samples.iter().enumerate() {
            let one = model.predict(&GraphBatch::from_samples(&[s]).unwrap()).unwrap();
            for j in 0..2 {
                assert!((all.get(b, j) - one.get(0, j)).abs() < 1e-9, "{arch}");
            }
        }
    }
}

#[test]
fn zeroing_one_sample_changes_only_its_prediction() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut samples: Vec<GraphSample> = (0..3).map(|k| sample(&mut rng, k, 4, 4, 2)).collect();
    for arch in Architecture::ALL {
        let model = Model::new(&small_config(arch, 4, 1), 4, 2).unwrap();
        let before = model.predict(&GraphBatch::from_samples(&samples.iter().collect::<Vec<_>>()).unwrap()).unwrap();
        let saved = samples[1].x.clone();
        samples[1].x.iter_mut().for_each(|v| *v = 0.0);
        let after = model.predict(&GraphBatch::from_samples(&samples.iter().collect::<Vec<_>>()).unwrap()).unwrap();
        samples[1].x = saved;
        for j in 0..2 {
            assert_eq!(before.get(0, j), after.get(0, j), "{arch}");
            assert_eq!(before.get(2, j), after.get(2, j), "{arch}");
        }
        assert!((0..2).any(|j| before.get(1, j) != after.get(1, j)), "{arch}");
    }
}

/// Largest relative gradient error of the training loss over all parameters.
pub(crate) fn model_gradient_error(arch: Architecture, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let samples: Vec<GraphSample> = (0..3).map(|k| sample(&mut rng, k, 4, 4, 2)).collect();
    let batch = GraphBatch::from_samples(&samples.iter().collect::<Vec<_>>()).unwrap();
    let cfg = ModelConfig {
        x_skip: seed % 2 == 1,
        ..small_config(arch, 4, seed)
    };
    let mut model = Model::new(&cfg, 4, 2).unwrap();
    // move biases off zero so their paths are exercised
    for t in model.params_mut().tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    }
    let mut check_rng = ChaCha8Rng::seed_from_u64(seed);
    let errs = check_gradients(
        model.params().tensors(),
        |tape, vars| model.loss(tape, vars, &batch),
        1e-5,
        Some(30),
        &mut check_rng,
    )
    .unwrap();
    errs.into_iter().fold(0.0, f64::max)
}

#[test]
fn end_to_end_gradients() {
    for arch in Architecture::ALL {
        for seed in 0..10 {
            let e = model_gradient_error(arch, seed);
            assert!(e < 1e-4, "{arch} seed {seed}: {e}");
        }
    }
}

fn linear_task(n_samples: usize, seed: u64) -> GraphDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, t) = (2, 3);
    let map: Vec<f64> = (0..n * t * 2).map(|_| rng.random_range(-0.5..0.5)).collect();
    let samples = (0..n_samples)
        .map(|k| {
            let mut s = sample(&mut rng, k, n, t, 2);
            s.y = (0..2).map(|o| (0..n * t).map(|i| s.x[i] * map[i * 2 + o]).sum()).collect();
            s
        })
        .collect();
    GraphDataset::new(samples).unwrap()
}

#[test]
fn mlp_solves_linear_task() {
    let data = linear_task(64, 5);
    let cfg = ModelConfig {
        architecture: Architecture::Mlp,
        mlp_hidden: 16,
        window: 3,
        learning_rate: 3e-3,
        batch_size: 64,
        max_epochs: 20000,
        patience: 20000,
        ..ModelConfig::default()
    };
    let mut model = Model::new(&cfg, 2, 2).unwrap();
    train(&mut model, &data, &data).unwrap();
    let batches: Vec<GraphBatch> = data.batches(64, false).collect();
    let mse = evaluate(&model, &batches).unwrap();
    assert!(mse < 1e-6, "train mse {mse}");
}

#[test]
fn improving_validation_runs_to_budget() {
    let data = linear_task(32, 6);
    let cfg = ModelConfig {
        architecture: Architecture::Mlp,
        mlp_hidden: 8,
        window: 3,
        learning_rate: 1e-3,
        batch_size: 32,
        max_epochs: 15,
        patience: 2,
        shuffle: false,
        ..ModelConfig::default()
    };
    let mut model = Model::new(&cfg, 2, 2).unwrap();
    let report = train(&mut model, &data, &data).unwrap();
    assert!(report.history.windows(2).all(|w| w[1].val_loss < w[0].val_loss));
    assert_eq!(report.epochs_run(), 15);
    assert_eq!(report.best_epoch, 14);
    assert!(!report.stopped_early);
}

#[test]
fn frozen_validation_stops_after_patience_plus_one() {
    let data = linear_task(16, 7);
    let cfg = ModelConfig {
        architecture: Architecture::Mlp,
        mlp_hidden: 4,
        window: 3,
        learning_rate: 0.0,
        batch_size: 8,
        max_epochs: 100,
        patience: 5,
        ..ModelConfig::default()
    };
    let mut model = Model::new(&cfg, 2, 2).unwrap();
    let report = train(&mut model, &data, &data).unwrap();
    assert_eq!(report.best_epoch, 0);
    assert_eq!(report.epochs_run(), 1 + 5 + 1);
    assert!(report.stopped_early);
}

#[test]
fn training_is_deterministic_and_restores_best() {
    let data = linear_task(40, 8);
    let cfg = ModelConfig {
        architecture: Architecture::Chebynet,
        graph_hidden: 3,
        mlp_hidden: 8,
        window: 3,
        learning_rate: 1e-2,
        batch_size: 16,
        max_epochs: 12,
        seed: 3,
        ..ModelConfig::default()
    };
    let run = || {
        let mut m = Model::new(&cfg, 2, 2).unwrap();
        let r = train(&mut m, &data, &data).unwrap();
        (m, r)
    };
    let (m1, r1) = run();
    let (m2, r2) = run();
    assert_eq!(m1.params(), m2.params());
    let losses = |r: &TrainReport| r.history.iter().map(|h| (h.train_loss, h.val_loss)).collect::<Vec<_>>();
    assert_eq!(losses(&r1), losses(&r2));
    let batches: Vec<GraphBatch> = data.batches(16, true).collect();
    assert_eq!(evaluate(&m1, &batches).unwrap(), r1.best_val_loss);
}

#[test]
fn divergence_reports_epoch() {
    let data = linear_task(16, 9);
    let cfg = ModelConfig {
        architecture: Architecture::Mlp,
        mlp_hidden: 4,
        window: 3,
        learning_rate: 1e300,
        batch_size: 16,
        max_epochs: 50,
        ..ModelConfig::default()
    };
    let mut model = Model::new(&cfg, 2, 2).unwrap();
    let err = train(&mut model, &data, &data).unwrap_err();
    assert!(matches!(err, NnError::Divergence { .. } | NnError::NonFiniteGradient(_)), "{err}");
}

#[test]
fn architecture_names_round_trip() {
    for a in Architecture::ALL {
        assert_eq!(a.name().parse::<Architecture>().unwrap(), a);
    }
    assert!("resnet".parse::<Architecture>().is_err());
    let text = toml::to_string(&ModelConfig::default()).unwrap();
    let back: ModelConfig = toml::from_str(&text).unwrap();
    assert_eq!(back, ModelConfig::default());
}
