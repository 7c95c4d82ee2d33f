use dact_core::classifier::{B_OUT, W_OUT};
use dact_core::corpus::{split_dataset, synth_generate, Conversation, SynthSpec, Taxonomy, DEFAULT_RATIOS};
use dact_core::numerics::{Matrix, SeededRng};
use dact_core::pipeline::{
    build_vocab, checkpoint_hash, evaluate, evaluate_with_threshold, multi_seed_eval, train, Model, ModelConfig,
};
use dact_core::Error;

fn separable(seed: u64) -> (Taxonomy, Vec<Conversation>) {
    let spec = SynthSpec::separable();
    let tax = Taxonomy::swda().restrict(&spec.labels()).unwrap();
    let convs = synth_generate(&spec, &tax, seed).unwrap();
    (tax, convs)
}

#[test]
fn zero_epochs_returns_the_initial_model() {
    let (tax, convs) = separable(1);
    let config = ModelConfig {
        epochs: 0,
        ..ModelConfig::desk()
    };
    let (model, report) = train(&config, &tax, &convs[..20], None, 4).unwrap();
    assert_eq!(report.epochs_run, 0);
    assert_eq!(report.best_epoch, 0);
    assert!(report.history.is_empty());
    let fresh = Model::new(config, tax, build_vocab(&convs[..20]), 4).unwrap();
    assert_eq!(checkpoint_hash(&model).unwrap(), checkpoint_hash(&fresh).unwrap());
}

#[test]
fn memorises_fifty_sentences() {
    let (tax, convs) = separable(2);
    let small: Vec<Conversation> = convs.into_iter().take(5).collect();
    assert_eq!(small.iter().map(|c| c.utterances.len()).sum::<usize>(), 50);
    let config = ModelConfig {
        dropout: 0.0,
        batch_conversations: 1,
        ..ModelConfig::desk()
    };
    let (model, _) = train(&config, &tax, &small, None, 0).unwrap();
    let report = evaluate(&model, &small).unwrap();
    assert!(report.accuracy >= 0.99, "training accuracy {}", report.accuracy);
}

#[test]
fn all_zero_head_predicts_label_zero() {
    let tax = Taxonomy::from_tags(&["a", "b", "c", "d"]).unwrap();
    let mut rng = SeededRng::new(8);
    let convs: Vec<Conversation> = (0..12)
        .map(|i| {
            let texts: Vec<String> = (0..4).map(|j| format!("word{} other{}", i + j, j)).collect();
            let mut c = Conversation::from_texts(&format!("c{i}"), &texts);
            for u in &mut c.utterances {
                u.label = Some(rng.below(4));
            }
            c
        })
        .collect();
    let mut model = Model::new(ModelConfig::desk(), tax, build_vocab(&convs), 0).unwrap();
    let (w, b) = (
        model.params.value(W_OUT).unwrap().clone(),
        model.params.value(B_OUT).unwrap().clone(),
    );
    model.params.insert(W_OUT, Matrix::zeros(w.rows(), w.cols()));
    model.params.insert(B_OUT, Matrix::zeros(b.rows(), b.cols()));
    let labels: Vec<usize> = convs
        .iter()
        .flat_map(|c| &c.utterances)
        .filter_map(|u| u.label)
        .collect();
    let freq0 = labels.iter().filter(|&&l| l == 0).count() as f64 / labels.len() as f64;
    let report = evaluate_with_threshold(&model, &convs, 0.0).unwrap();
    assert_eq!(report.accuracy, freq0);
    assert_eq!(report.fallback_rate, 0.0);
}

#[test]
fn training_is_deterministic_per_seed() {
    let (tax, convs) = separable(3);
    let config = ModelConfig {
        epochs: 2,
        ..ModelConfig::desk()
    };
    let train_set = &convs[..40];
    let a = train(&config, &tax, train_set, None, 9).unwrap();
    let b = train(&config, &tax, train_set, None, 9).unwrap();
    let c = train(&config, &tax, train_set, None, 10).unwrap();
    assert_eq!(a.1.history, b.1.history);
    assert_eq!(checkpoint_hash(&a.0).unwrap(), checkpoint_hash(&b.0).unwrap());
    assert_ne!(checkpoint_hash(&a.0).unwrap(), checkpoint_hash(&c.0).unwrap());
}

#[test]
fn disjoint_seeds_agree_within_three_points() {
    let (tax, convs) = separable(7);
    let split = split_dataset(convs, DEFAULT_RATIOS, 0).unwrap();
    let config = ModelConfig {
        epochs: 5,
        ..ModelConfig::desk()
    };
    let seeds: Vec<u64> = (100..108).collect();
    let report = multi_seed_eval(&config, &tax, &split, &seeds, 2).unwrap();
    assert_eq!(report.runs.len(), 8);
    for pair in report.runs.windows(2) {
        assert_ne!(pair[0].training.history, pair[1].training.history);
    }
    for r in &report.runs {
        assert!(
            (r.test_accuracy - report.mean_test_accuracy).abs() <= 0.03,
            "seed {} at {} vs mean {}",
            r.seed,
            r.test_accuracy,
            report.mean_test_accuracy
        );
    }
}

#[test]
fn evaluation_needs_labelled_utterances() {
    let (tax, convs) = separable(4);
    let model = Model::new(ModelConfig::desk(), tax, build_vocab(&convs), 0).unwrap();
    let unlabelled = Conversation::from_texts("u", &["hello there"]);
    assert!(matches!(evaluate(&model, &[unlabelled]), Err(Error::EmptyEval)));
    assert!(matches!(evaluate(&model, &[]), Err(Error::EmptyEval)));
}

#[test]
fn failing_seed_is_identified() {
    let (tax, convs) = separable(5);
    let split = split_dataset(convs, DEFAULT_RATIOS, 0).unwrap();
    let config = ModelConfig {
        epochs: 1,
        lr: 1e300,
        ..ModelConfig::desk()
    };
    match multi_seed_eval(&config, &tax, &split, &[42], 1) {
        Err(Error::Seed { seed, source }) => {
            assert_eq!(seed, 42);
            assert!(matches!(*source, Error::Numeric(_)), "{source}");
        }
        other => panic!("expected a seed-tagged numeric error, got {other:?}"),
    }
}
