use super::*;

use crate::embedding::{fuse, EmbeddingMatrix, TopicVectorTable};

/// Tiny network from the gradient-check contract: V=10, y=4, L=8,
/// region sizes {2,3}, F=2, two classes. Topic mode adds a 3-row table.
fn tiny_model(topic_mode: bool, seed: u64) -> CnnModel<f64> {
    let emb = EmbeddingMatrix::<f64>::seeded_random(10, 4, seed);
    let table = topic_mode.then(|| {
        let m = EmbeddingMatrix::<f64>::seeded_random(4, 4, seed ^ 0x5a5a).into_matrix();
        TopicVectorTable::from_matrix(m.slice(ndarray::s![1.., ..]).to_owned(), 3)
    });
    CnnModel::new(&emb, table.as_ref(), &[2, 3], 2, 2, seed).unwrap()
}

fn tiny_docs(topic_mode: bool) -> Vec<CnnDoc> {
    let topic = |t: usize| topic_mode.then_some(t);
    vec![
        CnnDoc { indices: vec![1, 4, 2, 9, 3, 0, 0, 0], topic: topic(0), label: 0, doc_id: 0 },
        CnnDoc { indices: vec![5, 1, 1, 7, 8, 6, 2, 4], topic: topic(2), label: 1, doc_id: 1 },
        CnnDoc { indices: vec![9, 0, 3, 3, 5, 2, 0, 0], topic: topic(1), label: 1, doc_id: 2 },
    ]
}

fn no_dropout_config() -> TrainConfig {
    TrainConfig {
        dropout_rate: 0.0,
        shuffle_seed: 11,
        ..TrainConfig::default()
    }
}

/// The tiny model as initialized has feature maps spread over roughly 3e-3,
/// the same scale as the margins a 1e-3 probe needs, so almost every seed
/// has some unit too close to a ReLU or argmax flip. Scaling filters and
/// dense weights widens every margin without changing the gradient math.
fn fd_model(topic_mode: bool, seed: u64) -> CnnModel<f64> {
    let mut model = tiny_model(topic_mode, seed);
    for f in &mut model.filters {
        *f *= 20.0;
    }
    model.dense *= 20.0;
    model
}

fn stable_seed(topic_mode: bool) -> u64 {
    (0u64..500)
        .find(|&s| gradcheck::margins_ok(&fd_model(topic_mode, s), &tiny_docs(topic_mode)))
        .expect("some seed keeps all gates away from the finite-difference step")
}

#[test]
fn finite_differences_confirm_every_gradient_in_topic_mode() {
    let seed = stable_seed(true);
    let mut model = fd_model(true, seed);
    let docs = tiny_docs(true);
    let worst = gradcheck::max_relative_error(&mut model, &docs, &no_dropout_config(), 1).unwrap();
    assert!(worst < 1e-4, "max relative error {worst:.3e} (seed {seed})");
}

#[test]
fn finite_differences_confirm_gradients_in_word_only_mode() {
    let seed = stable_seed(false);
    let mut model = fd_model(false, seed);
    let docs = tiny_docs(false);
    let worst = gradcheck::max_relative_error(&mut model, &docs, &no_dropout_config(), 1).unwrap();
    assert!(worst < 1e-4, "max relative error {worst:.3e} (seed {seed})");
}

#[test]
fn finite_differences_hold_under_replayed_dropout_masks() {
    let seed = stable_seed(true);
    let mut model = fd_model(true, seed);
    let docs = tiny_docs(true);
    let config = TrainConfig { dropout_rate: 0.5, ..no_dropout_config() };
    let worst = gradcheck::max_relative_error(&mut model, &docs, &config, 3).unwrap();
    assert!(worst < 1e-4, "max relative error {worst:.3e} (seed {seed})");
}

#[test]
fn gradients_never_touch_the_padding_row() {
    let model = tiny_model(true, 5);
    let docs = tiny_docs(true);
    let grads = model.compute_gradients(&docs, &no_dropout_config(), 1).unwrap();
    assert!(!grads.embedding_rows.contains_key(&0));
    assert!(!grads.embedding_rows.is_empty());
}

#[test]
fn fast_forward_path_matches_the_op_composition() {
    let model = tiny_model(true, 7);
    let doc = &tiny_docs(true)[1];

    let (label, probs) = model.predict(doc).unwrap();

    // Same input assembled through the public fusion path, classified with
    // the op-by-op reference.
    let emb = EmbeddingMatrix::from_matrix(model.embedding.clone());
    let table = TopicVectorTable::from_matrix(model.topic_table.clone().unwrap(), 3);
    let padded = PaddedDocument {
        indices: doc.indices.clone(),
        true_length: doc.indices.iter().filter(|&&w| w != 0).count(),
        label: doc.label,
        doc_id: doc.doc_id,
    };
    let fused = fuse(&padded, &emb, &table, doc.topic.unwrap()).unwrap();
    let (ref_label, ref_probs) = model.predict_input(fused.matrix.view()).unwrap();

    assert_eq!(label, ref_label);
    for (a, b) in probs.iter().zip(&ref_probs) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn duplicated_batches_produce_identical_mean_gradients() {
    let model = tiny_model(true, 9);
    let docs = tiny_docs(true);
    let config = no_dropout_config();
    let once = model.compute_gradients(&docs, &config, 1).unwrap();
    let doubled: Vec<CnnDoc> = docs.iter().chain(docs.iter()).cloned().collect();
    let twice = model.compute_gradients(&doubled, &config, 1).unwrap();

    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    for r in 0..once.filters.len() {
        for (a, b) in once.filters[r].iter().zip(twice.filters[r].iter()) {
            assert!(close(*a, *b));
        }
        for (a, b) in once.biases[r].iter().zip(twice.biases[r].iter()) {
            assert!(close(*a, *b));
        }
    }
    for (a, b) in once.dense.iter().zip(twice.dense.iter()) {
        assert!(close(*a, *b));
    }
    for (w, row) in &once.embedding_rows {
        let other = &twice.embedding_rows[w];
        for (a, b) in row.iter().zip(other) {
            assert!(close(*a, *b));
        }
    }
    assert!((once.mean_loss() - twice.mean_loss()).abs() < 1e-12);
}

#[test]
fn gradient_computation_replays_bit_identically() {
    let model = tiny_model(true, 13);
    let docs = tiny_docs(true);
    let config = TrainConfig { dropout_rate: 0.5, ..no_dropout_config() };
    let a = model.compute_gradients(&docs, &config, 7).unwrap();
    let b = model.compute_gradients(&docs, &config, 7).unwrap();
    assert_eq!(a.loss_sum.to_bits(), b.loss_sum.to_bits());
    for r in 0..a.filters.len() {
        for (x, z) in a.filters[r].iter().zip(b.filters[r].iter()) {
            assert_eq!(x.to_bits(), z.to_bits());
        }
    }
    // A different step draws different masks.
    let c = model.compute_gradients(&docs, &config, 8).unwrap();
    assert_ne!(a.loss_sum.to_bits(), c.loss_sum.to_bits());
}

#[test]
fn training_on_a_separable_toy_set_reaches_full_accuracy() {
    // Two word blocks and two distinct topics; either channel separates.
    let emb = EmbeddingMatrix::<f64>::seeded_random(12, 6, 21);
    let table = TopicVectorTable::from_matrix(
        EmbeddingMatrix::<f64>::seeded_random(3, 6, 99).into_matrix().slice(ndarray::s![1.., ..]).to_owned(),
        4,
    );
    let mut model = CnnModel::new(&emb, Some(&table), &[2, 3], 3, 2, 17).unwrap();
    let mut docs = Vec::new();
    for i in 0..20 {
        let class = i % 2;
        let base = 1 + 5 * class as u32;
        let indices: Vec<u32> = (0..8).map(|j| if j < 6 { base + (i as u32 + j) % 5 } else { 0 }).collect();
        docs.push(CnnDoc { indices, topic: Some(class), label: class, doc_id: i });
    }
    let config = TrainConfig {
        batch_size: 4,
        epochs: 30,
        learning_rate: 1e-3,
        dropout_rate: 0.0,
        optimizer: OptimizerKind::Adam,
        shuffle_seed: 3,
        fine_tune_embeddings: true,
    };
    let history = train(&mut model, &docs, &config).unwrap();
    assert_eq!(history.epochs.len(), 30);
    let best = history.epochs.iter().map(|e| e.train_accuracy).fold(0.0, f64::max);
    assert_eq!(best, 1.0, "never separated: {:?}", history.epochs.last());
    // Losses are finite and generally decreasing.
    assert!(history.epochs.iter().all(|e| e.mean_loss.is_finite()));
    assert!(history.epochs.last().unwrap().mean_loss < history.epochs[0].mean_loss);

    // Trained model predicts its own training set correctly.
    let preds = model.predict_batch(&docs).unwrap();
    let correct = preds.iter().zip(&docs).filter(|(p, d)| **p == d.label).count();
    assert_eq!(correct, docs.len());
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let mut model = tiny_model(true, 3);
    let before: Vec<u64> = model.dense.iter().map(|v| v.to_bits()).collect();
    let config = TrainConfig { epochs: 0, ..no_dropout_config() };
    let history = train(&mut model, &tiny_docs(true), &config).unwrap();
    assert!(history.epochs.is_empty());
    let after: Vec<u64> = model.dense.iter().map(|v| v.to_bits()).collect();
    assert_eq!(before, after);
}

#[test]
fn zero_learning_rate_training_is_a_bitwise_no_op() {
    for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        let mut model = tiny_model(true, 3);
        let snapshot = (
            model.dense.clone(),
            model.filters.clone(),
            model.embedding.clone(),
        );
        let config = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            optimizer: kind,
            batch_size: 2,
            ..no_dropout_config()
        };
        train(&mut model, &tiny_docs(true), &config).unwrap();
        assert!(model.dense.iter().zip(snapshot.0.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        for r in 0..model.filters.len() {
            assert!(model.filters[r].iter().zip(snapshot.1[r].iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        assert!(model.embedding.iter().zip(snapshot.2.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn identical_seeds_train_bit_identical_models() {
    let run = |seed: u64| {
        let mut model = tiny_model(true, 3);
        let config = TrainConfig { epochs: 3, batch_size: 2, dropout_rate: 0.5, shuffle_seed: seed, ..TrainConfig::default() };
        train(&mut model, &tiny_docs(true), &config).unwrap();
        model
    };
    let (a, b, c) = (run(5), run(5), run(6));
    assert!(a.dense.iter().zip(b.dense.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(a.embedding.iter().zip(b.embedding.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(a.dense.iter().zip(c.dense.iter()).any(|(x, y)| x.to_bits() != y.to_bits()));
}

#[test]
fn padding_row_stays_zero_through_training() {
    let mut model = tiny_model(true, 3);
    let config = TrainConfig { epochs: 4, batch_size: 2, ..no_dropout_config() };
    train(&mut model, &tiny_docs(true), &config).unwrap();
    assert!(model.embedding.row(0).iter().all(|&v| v == 0.0));
    // Fine-tuning moved at least one real row.
    let fresh = tiny_model(true, 3);
    assert!(model.embedding.iter().zip(fresh.embedding.iter()).any(|(a, b)| a != b));
}

#[test]
fn frozen_embeddings_stay_put_when_fine_tuning_is_off() {
    let mut model = tiny_model(true, 3);
    let before = model.embedding.clone();
    let config = TrainConfig { epochs: 3, batch_size: 2, fine_tune_embeddings: false, ..no_dropout_config() };
    train(&mut model, &tiny_docs(true), &config).unwrap();
    assert!(model.embedding.iter().zip(before.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    // But the classifier itself did move.
    let fresh = tiny_model(true, 3);
    assert!(model.dense.iter().zip(fresh.dense.iter()).any(|(a, b)| a != b));
}

#[test]
fn poisoned_parameters_abort_with_step_coordinates() {
    let mut model = tiny_model(true, 3);
    model.dense[[0, 0]] = f64::NAN;
    let err = train(&mut model, &tiny_docs(true), &no_dropout_config()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("epoch 0"), "{msg}");
    assert!(msg.to_lowercase().contains("nan"), "{msg}");
}

#[test]
fn document_validation_catches_mismatches() {
    let model = tiny_model(true, 3);
    let mut doc = tiny_docs(true).remove(0);
    doc.topic = None;
    assert!(model.predict(&doc).is_err());
    doc.topic = Some(99);
    assert!(model.predict(&doc).is_err());
    doc.topic = Some(0);
    doc.indices = vec![1, 2];
    assert!(model.predict(&doc).is_err());
    doc.indices = vec![1; 8];
    doc.label = 5;
    assert!(model.compute_gradients(&[doc], &no_dropout_config(), 1).is_err());

    let word_only = tiny_model(false, 3);
    let with_topic = &tiny_docs(true)[0];
    assert!(word_only.predict(with_topic).is_err());

    assert!(model.compute_gradients(&[], &no_dropout_config(), 1).is_err());
    let mixed = vec![
        CnnDoc { indices: vec![1; 8], topic: Some(0), label: 0, doc_id: 0 },
        CnnDoc { indices: vec![1; 9], topic: Some(0), label: 0, doc_id: 1 },
    ];
    assert!(model.compute_gradients(&mixed, &no_dropout_config(), 1).is_err());
}

#[test]
fn prediction_breaks_probability_ties_toward_class_zero() {
    let mut model = tiny_model(true, 3);
    model.dense.fill(0.0);
    let (label, probs) = model.predict(&tiny_docs(true)[0]).unwrap();
    assert_eq!(label, 0);
    assert!((probs[0] - 0.5).abs() < 1e-15);
    assert!((probs[1] - 0.5).abs() < 1e-15);
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let mut model = tiny_model(true, 3);
    train(&mut model, &tiny_docs(true), &TrainConfig { epochs: 1, ..no_dropout_config() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    model.save(&path).unwrap();
    let back = CnnModel::<f64>::load(&path).unwrap();
    assert_eq!(back.spec, model.spec);
    assert_eq!(back.init_seed, model.init_seed);
    assert!(back.embedding.iter().zip(model.embedding.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(back.dense.iter().zip(model.dense.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    for r in 0..model.filters.len() {
        assert!(back.filters[r].iter().zip(model.filters[r].iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(back.biases[r].iter().zip(model.biases[r].iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    let t = back.topic_table.as_ref().unwrap();
    assert!(t.iter().zip(model.topic_table.as_ref().unwrap().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));

    // Loading under the wrong scalar type is refused.
    assert!(CnnModel::<f32>::load(&path).is_err());

    // Predictions agree bitwise.
    let doc = &tiny_docs(true)[0];
    let (l1, p1) = model.predict(doc).unwrap();
    let (l2, p2) = back.predict(doc).unwrap();
    assert_eq!(l1, l2);
    assert!(p1.iter().zip(&p2).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn word_only_and_topic_modes_differ_only_in_input_width() {
    let tb = tiny_model(true, 3);
    let plain = tiny_model(false, 3);
    assert_eq!(tb.spec.input_width, 2 * plain.spec.input_width);
    assert_eq!(tb.spec.region_sizes, plain.spec.region_sizes);
    assert_eq!(tb.spec.filters_per_size, plain.spec.filters_per_size);
    // Parameter-count formula: sum over h of F*(h*d + 1).
    let d = tb.spec.input_width;
    let f = tb.spec.filters_per_size;
    let expected: usize = tb.spec.region_sizes.iter().map(|&h| f * (h * d + 1)).sum();
    assert_eq!(tb.spec.conv_param_count(), expected);
    let direct: usize = tb.filters.iter().map(|m| m.len()).sum::<usize>()
        + tb.biases.iter().map(|b| b.len()).sum::<usize>();
    assert_eq!(tb.spec.conv_param_count(), direct);
    assert_eq!(tb.param_count(), tb.spec.conv_param_count() + tb.dense.len() + tb.embedding.len());
}

#[test]
fn conv_spec_validation_rejects_degenerate_shapes() {
    assert!(ConvSpec { region_sizes: vec![], filters_per_size: 1, input_width: 4 }.validate().is_err());
    assert!(ConvSpec { region_sizes: vec![0], filters_per_size: 1, input_width: 4 }.validate().is_err());
    assert!(ConvSpec { region_sizes: vec![2], filters_per_size: 0, input_width: 4 }.validate().is_err());
    assert!(ConvSpec { region_sizes: vec![2], filters_per_size: 1, input_width: 0 }.validate().is_err());
    assert!(ConvSpec { region_sizes: vec![4, 5, 6], filters_per_size: 100, input_width: 600 }.validate().is_ok());
}

#[test]
fn train_config_validation_rejects_bad_rates() {
    assert!(TrainConfig { dropout_rate: 1.0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { dropout_rate: -0.1, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { learning_rate: f64::NAN, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig::default().validate().is_ok());
}

#[test]
fn training_log_lists_one_row_per_epoch() {
    let history = TrainHistory {
        epochs: vec![
            EpochStats { epoch: 0, mean_loss: 0.693, train_accuracy: 0.5, seconds: 0.1 },
            EpochStats { epoch: 1, mean_loss: 0.5, train_accuracy: 0.75, seconds: 0.1 },
        ],
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("training_log.tsv");
    save_training_log(&history, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "epoch\tloss\ttrain_acc");
    assert!(lines[1].starts_with("0\t0.693000\t0.500000"));
}

#[test]
fn predict_input_checks_shape_compatibility() {
    let model = tiny_model(false, 3);
    let bad_width = Array2::<f64>::zeros((8, 5));
    assert!(model.predict_input(bad_width.view()).is_err());
    let too_short = Array2::<f64>::zeros((2, 4));
    assert!(model.predict_input(too_short.view()).is_err());
    let fine = Array2::<f64>::zeros((8, 4));
    assert!(model.predict_input(fine.view()).is_ok());
}
