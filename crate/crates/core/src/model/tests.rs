use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graphio::{synth_factor_graph, FactorGraphSpec, Splits};
use crate::tensor::gradcheck::check_gradients;

fn small_config(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        channels: 2,
        delta_f: 3,
        iterations: 3,
        layers: 2,
        dropout: 0.0,
        model_kind: kind,
        ..ModelConfig::default()
    }
}

/// Ten nodes on a ring with two chords, four features, two classes.
fn ring_graph() -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10;
    let data = (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let features = Matrix::from_vec(n, 4, data).unwrap();
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    edges.extend([(0, 5), (2, 7)]);
    let labels = (0..n).map(|i| Some(usize::from(i >= 5))).collect();
    let splits = Splits {
        train: vec![0, 1, 5, 6],
        val: vec![2, 7],
        test: vec![3, 4, 8, 9],
    };
    Graph::new(features, &edges, labels, 2, splits).unwrap()
}

/// Two 6-cliques joined by one edge, identity features.
fn two_cliques() -> Graph {
    let n = 12;
    let mut edges = Vec::new();
    for block in [0..6, 6..12] {
        for u in block.clone() {
            for v in block.clone() {
                if u < v {
                    edges.push((u, v));
                }
            }
        }
    }
    edges.push((5, 6));
    let labels = (0..n).map(|i| Some(usize::from(i >= 6))).collect();
    let splits = Splits {
        train: (0..n).collect(),
        val: vec![],
        test: vec![],
    };
    Graph::new(Matrix::identity(n), &edges, labels, 2, splits).unwrap()
}

#[test]
fn forward_shapes_and_probabilities() {
    let graph = ring_graph();
    for kind in [ModelKind::Ipgdn, ModelKind::GcnBaseline] {
        let cfg = small_config(kind);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = IpgdnModel::init(&cfg, 4, 2, &mut rng);
        let ctx = GraphContext::new(&graph, kind);
        let (logits, rep) = model.predict(&ctx, &cfg).unwrap();
        assert_eq!(logits.shape(), (10, 2));
        assert_eq!(rep.shape(), (10, model.representation_width()));
        for row in 0..10 {
            let probs = crate::tensor::softmax_rows(&logits);
            let s: f64 = probs.row(row).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn init_and_forward_are_deterministic() {
    let graph = ring_graph();
    let cfg = ModelConfig {
        dropout: 0.5,
        ..small_config(ModelKind::Ipgdn)
    };
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = IpgdnModel::init(&cfg, 4, 2, &mut rng);
        let ctx = GraphContext::new(&graph, cfg.model_kind);
        let mut tape = Tape::new();
        let handles = model.register(&mut tape);
        let out = forward(&mut tape, &model, &handles, &ctx, &cfg, true, &mut rng).unwrap();
        tape.value(out.logits).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn parameter_names_and_widths() {
    let cfg = small_config(ModelKind::Ipgdn);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = IpgdnModel::init(&cfg, 4, 3, &mut rng);
    let names: Vec<&str> = model.params().iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["layer0.weight", "layer0.bias", "layer1.weight", "layer1.bias", "head.weight", "head.bias"]);
    assert_eq!(model.params()[0].value.shape(), (4, 6));
    assert_eq!(model.params()[2].value.shape(), (6, 6));
    assert_eq!(model.params()[4].value.shape(), (6, 3));
    assert!(model.params()[1].value.data().iter().all(|&b| b == 0.0));
    let limit = (6.0f64 / 10.0).sqrt();
    assert!(model.params()[0].value.data().iter().all(|w| w.abs() <= limit));

    let gcn = IpgdnModel::init(&small_config(ModelKind::GcnBaseline), 4, 3, &mut rng);
    let names: Vec<&str> = gcn.params().iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["layer0.weight", "layer1.weight", "head.weight", "head.bias"]);
}

#[test]
fn total_loss_gradient_matches_finite_differences() {
    let graph = ring_graph();
    for (kind, scope) in [
        (ModelKind::Ipgdn, HsicScope::Labeled),
        (ModelKind::Ipgdn, HsicScope::All),
        (ModelKind::GcnBaseline, HsicScope::Labeled),
    ] {
        let cfg = ModelConfig {
            lambda: 0.3,
            weight_decay: 0.01,
            hsic_scope: scope,
            ..small_config(kind)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut model = IpgdnModel::init(&cfg, 4, 2, &mut rng);
        // Positive biases keep pre-activations away from the ReLU kink.
        for p in model.params_mut() {
            if p.name.starts_with("layer") && p.name.ends_with("bias") {
                p.value = p.value.map(|_| 0.05);
            }
        }
        let ctx = GraphContext::new(&graph, kind);
        let values: Vec<Matrix> = model.params().iter().map(|p| p.value.clone()).collect();
        let check = check_gradients(&values, 1e-6, |tape, leaves| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let out = forward(tape, &model, leaves, &ctx, &cfg, false, &mut rng)?;
            Ok(total_loss(tape, &out, &model, leaves, &ctx, &cfg)?.total)
        })
        .unwrap();
        assert!(check.relative_error < 1e-4, "{kind}: {}", check.relative_error);
    }
}

#[test]
fn cross_entropy_uniform_logits() {
    let mut tape = Tape::new();
    let logits = tape.constant(Matrix::zeros(4, 3));
    let labels = vec![Some(0), Some(1), Some(2), None];
    let ce = cross_entropy(&mut tape, logits, &labels, &[0, 1, 2]).unwrap();
    assert!((tape.value(ce).get(0, 0) - 3.0 * 3f64.ln()).abs() < 1e-12);
}

#[test]
fn cross_entropy_confident_and_oracle() {
    let mut tape = Tape::new();
    let logits = tape.constant(Matrix::from_rows(&[[20.0, 0.0], [0.0, 20.0]]).unwrap());
    let ce = cross_entropy(&mut tape, logits, &[Some(0), Some(1)], &[0, 1]).unwrap();
    assert!(tape.value(ce).get(0, 0) < 1e-3);

    let raw = Matrix::from_rows(&[[0.3, -1.2, 2.0], [1.5, 0.1, -0.4]]).unwrap();
    let logits = tape.constant(raw.clone());
    let ce = cross_entropy(&mut tape, logits, &[Some(2), Some(1)], &[0, 1]).unwrap();
    let direct = |row: &[f64], y: usize| -> f64 {
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        -(row[y].exp() / z).ln()
    };
    let expected = direct(raw.row(0), 2) + direct(raw.row(1), 1);
    assert!((tape.value(ce).get(0, 0) - expected).abs() < 1e-10);
}

#[test]
fn cross_entropy_rejects_unlabeled_mask_nodes() {
    let mut tape = Tape::new();
    let logits = tape.constant(Matrix::zeros(2, 2));
    assert!(matches!(
        cross_entropy(&mut tape, logits, &[Some(0), None], &[0, 1]),
        Err(Error::Validation(_))
    ));
}

#[test]
fn total_loss_reduces_to_cross_entropy_without_penalties() {
    let graph = ring_graph();
    let cfg = ModelConfig {
        lambda: 0.0,
        weight_decay: 0.0,
        ..small_config(ModelKind::Ipgdn)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = IpgdnModel::init(&cfg, 4, 2, &mut rng);
    let ctx = GraphContext::new(&graph, cfg.model_kind);
    let mut tape = Tape::new();
    let handles = model.register(&mut tape);
    let out = forward(&mut tape, &model, &handles, &ctx, &cfg, false, &mut rng).unwrap();
    let parts = total_loss(&mut tape, &out, &model, &handles, &ctx, &cfg).unwrap();
    assert_eq!(tape.value(parts.total), tape.value(parts.cross_entropy));
    assert!(tape.value(parts.independence).get(0, 0) >= 0.0);
}

#[test]
fn total_loss_adds_weighted_penalty() {
    let graph = ring_graph();
    let cfg = ModelConfig {
        lambda: 0.25,
        weight_decay: 0.0,
        ..small_config(ModelKind::Ipgdn)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = IpgdnModel::init(&cfg, 4, 2, &mut rng);
    let ctx = GraphContext::new(&graph, cfg.model_kind);
    let mut tape = Tape::new();
    let handles = model.register(&mut tape);
    let out = forward(&mut tape, &model, &handles, &ctx, &cfg, false, &mut rng).unwrap();
    let parts = total_loss(&mut tape, &out, &model, &handles, &ctx, &cfg).unwrap();
    let total = tape.value(parts.total).get(0, 0);
    let ce = tape.value(parts.cross_entropy).get(0, 0);
    let hsic = tape.value(parts.independence).get(0, 0);
    assert!((total - (ce + 0.25 * hsic)).abs() < 1e-12);
    let oracle = crate::hsic::independence_loss_value(tape.value(out.representation), 2, &graph.splits().train).unwrap();
    assert!((hsic - oracle).abs() < 1e-10);
}

#[test]
fn training_overfits_two_cliques() {
    let graph = two_cliques();
    for kind in [ModelKind::Ipgdn, ModelKind::GcnBaseline] {
        let cfg = ModelConfig {
            epochs: 200,
            seed: 1,
            ..small_config(kind)
        };
        let (model, trace) = train(&graph, &cfg).unwrap();
        assert_eq!(trace.len(), 200);
        assert!(trace.epochs[49].total_loss < trace.epochs[0].total_loss);
        let ctx = GraphContext::new(&graph, kind);
        let (logits, _) = model.predict(&ctx, &cfg).unwrap();
        let truth: Vec<usize> = graph.labels().iter().map(|l| l.unwrap()).collect();
        assert_eq!(crate::eval::accuracy(&logits.argmax_rows(), &truth).unwrap(), 1.0, "{kind}");
    }
}

#[test]
fn training_is_deterministic_and_restores_best() {
    let spec = FactorGraphSpec {
        train_per_class: 5,
        val_size: 30,
        test_size: 40,
        ..FactorGraphSpec::new(90, 2, 3, 0.2, 0.02, 4)
    };
    let (graph, _) = synth_factor_graph(&spec).unwrap();
    let cfg = ModelConfig {
        epochs: 40,
        patience: 5,
        ..small_config(ModelKind::Ipgdn)
    };
    let (model_a, trace_a) = train(&graph, &cfg).unwrap();
    let (model_b, trace_b) = train(&graph, &cfg).unwrap();
    assert_eq!(trace_a, trace_b);
    assert_eq!(model_a, model_b);
    let best = trace_a.epochs[trace_a.best_epoch - 1].val_acc;
    assert_eq!(best, trace_a.best_val_acc);
    assert!(trace_a.epochs.iter().all(|r| r.val_acc <= best));
    if trace_a.len() < 40 {
        assert_eq!(trace_a.len(), trace_a.best_epoch + cfg.patience);
    }
    let ctx = GraphContext::new(&graph, cfg.model_kind);
    let (logits, _) = model_a.predict(&ctx, &cfg).unwrap();
    let val = &graph.splits().val;
    let truth: Vec<usize> = val.iter().map(|&v| graph.label(v).unwrap()).collect();
    let acc = crate::eval::accuracy(&logits.select_rows(val).argmax_rows(), &truth).unwrap();
    assert_eq!(acc, best);
}

#[test]
fn divergence_is_reported_with_epoch() {
    let graph = two_cliques();
    let cfg = ModelConfig {
        lr: 1e300,
        epochs: 20,
        ..small_config(ModelKind::GcnBaseline)
    };
    match train(&graph, &cfg) {
        Err(Error::Training { epoch, .. }) => assert!(epoch >= 1),
        other => panic!("expected a training error, got {other:?}"),
    }
}
