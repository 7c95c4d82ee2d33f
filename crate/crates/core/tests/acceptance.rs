//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use dact_core::classifier::{pos_tag, rule_classify, FallbackRuleSet};
use dact_core::combiner::LabelMode;
use dact_core::corpus::{
    context_free_bayes_accuracy, conversation_to_json, is_ambiguous, parse_conversation, split_dataset, synth_generate,
    tokenize, Conversation, SynthSpec, Taxonomy, DEFAULT_RATIOS,
};
use dact_core::encoder_attn::{attend, attention_scores, ContextualAttention};
use dact_core::encoder_lm::{mix_layers, LayerMixer};
use dact_core::numerics::{Matrix, ParamStore, SeededRng};
use dact_core::pipeline::{
    build_vocab, checkpoint_bytes, checkpoint_from_bytes, checkpoint_hash, evaluate, evaluate_with_threshold,
    multi_seed_eval, train, train_and_evaluate, BowBaseline, BowConfig, Model, ModelConfig, ProbeRegistry,
    GRADCHECK_TOLERANCE,
};
use dact_core::Error;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e(err: Error) -> String {
    err.to_string()
}

fn separable() -> (Taxonomy, Vec<Conversation>) {
    let spec = SynthSpec::separable();
    let tax = Taxonomy::swda().restrict(&spec.labels()).unwrap();
    let convs = synth_generate(&spec, &tax, 7).unwrap();
    (tax, convs)
}

fn sentences(convs: &[Conversation]) -> usize {
    convs.iter().map(|c| c.utterances.len()).sum()
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let results = ProbeRegistry::default().run_all(&seeds).map_err(e)?;
    let secs = start.elapsed().as_secs_f64();
    let mut parts = Vec::new();
    for r in &results {
        ensure(
            r.max_rel_error < GRADCHECK_TOLERANCE,
            format!(
                "{} max rel error {:.3e} at {}",
                r.module, r.max_rel_error, r.worst_param
            ),
        )?;
        parts.push(format!("{} {:.1e}", r.module, r.max_rel_error));
    }
    ensure(secs < 120.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "{} modules x {} seeds in {secs:.1}s; {}",
        results.len(),
        seeds.len(),
        parts.join(", ")
    ))
}

fn mixer_exactness() -> Outcome {
    let mut rng = SeededRng::new(2);
    let layers: Vec<Matrix> = (0..4).map(|_| rng.uniform_matrix(3, 5, 2.0)).collect();

    let mut raw = vec![0.0; 4];
    raw[3] = 1e6;
    let top = mix_layers(&layers, &raw, 1.0).map_err(e)?;
    let dev = top.sub(&layers[3]).map_err(e)?.max_abs();
    ensure(dev <= 1e-9, format!("dominant top layer deviates by {dev:e}"))?;

    let mut worst_sum: f64 = 0.0;
    for seed in 0..50 {
        let mut r = SeededRng::new(seed);
        let raw: Vec<f64> = (0..4).map(|_| r.uniform(-20.0, 20.0)).collect();
        let w = Matrix::row_vector(&raw).softmax_rows();
        worst_sum = worst_sum.max((w.data().iter().sum::<f64>() - 1.0).abs());
        let zero = mix_layers(&layers, &raw, 0.0).map_err(e)?;
        ensure(zero.data().iter().all(|&v| v == 0.0), "gamma = 0 gave a non-zero entry")?;
    }
    ensure(worst_sum <= 1e-12, format!("weights sum off by {worst_sum:e}"))?;

    // The trainable mixer uses the same weights.
    let mixer = LayerMixer::new("m", vec![2, 2], 2);
    let mut store = ParamStore::new();
    mixer.init_params(&mut store, &mut rng);
    let w = mixer.weights(&store).map_err(e)?;
    ensure(
        (w.iter().sum::<f64>() - 1.0).abs() <= 1e-12,
        "mixer weights do not sum to 1",
    )?;
    Ok(format!(
        "top-layer deviation {dev:.1e}, max |sum-1| {worst_sum:.1e}, gamma=0 exact"
    ))
}

#[allow(clippy::needless_range_loop)]
fn attention_hand_oracle() -> Outcome {
    // input 2, d_a 2, heads 2, context 2, T = 2
    let att = ContextualAttention::new("a", 2, 2, 2, 2);
    let w1 = [[0.3, -0.7], [1.1, 0.4]];
    let w2 = [[0.5, -1.2], [0.9, 0.2]];
    let w3 = [[-0.6, 0.8], [0.25, -0.35]];
    let b = [0.1, -0.2];
    let h = [[0.9, -0.4], [-1.3, 0.6]];
    let g = [0.7, -0.5];
    let m = |rows: &[[f64; 2]; 2]| Matrix::from_rows(&[rows[0].to_vec(), rows[1].to_vec()]).unwrap();
    let mut store = ParamStore::new();
    store.insert(att.name("W_s1"), m(&w1));
    store.insert(att.name("W_s2"), m(&w2));
    store.insert(att.name("W_s3"), m(&w3));
    store.insert(att.name("b"), Matrix::row_vector(&b));
    let hm = m(&h);

    let s = attention_scores(&att, &store, &hm, &g).map_err(e)?;
    let mut worst: f64 = 0.0;
    for head in 0..2 {
        for t in 0..2 {
            let mut expected = 0.0;
            for k in 0..2 {
                let pre = w1[k][0] * h[t][0] + w1[k][1] * h[t][1] + w3[k][0] * g[0] + w3[k][1] * g[1] + b[k];
                expected += w2[head][k] * pre.tanh();
            }
            worst = worst.max((s.get(head, t) - expected).abs());
        }
    }
    ensure(
        worst <= 1e-12,
        format!("scores differ from hand evaluation by {worst:e}"),
    )?;

    let mut flat = store.clone();
    flat.insert(att.name("W_s2"), Matrix::zeros(2, 2));
    let a = attend(&attention_scores(&att, &flat, &hm, &g).map_err(e)?, &hm).map_err(e)?;
    let uni = a.weights.data().iter().map(|w| (w - 0.5).abs()).fold(0.0, f64::max);
    ensure(uni <= 1e-12, format!("zero W_s2 attention off uniform by {uni:e}"))?;

    let g_zero = attention_scores(&att, &store, &hm, &[0.0, 0.0]).map_err(e)?;
    let mut no_w3 = store.clone();
    no_w3.insert(att.name("W_s3"), Matrix::zeros(2, 2));
    let w3_zero = attention_scores(&att, &no_w3, &hm, &g).map_err(e)?;
    ensure(g_zero == w3_zero, "g_prev = 0 and W_s3 = 0 disagree")?;
    Ok(format!(
        "max hand-oracle error {worst:.1e}, uniform error {uni:.1e}, g=0 == W_s3=0 exactly"
    ))
}

fn desk_learnability() -> Outcome {
    let (tax, convs) = separable();
    let split = split_dataset(convs, [10.0 / 12.0, 1.0 / 12.0, 1.0 / 12.0], 7).map_err(e)?;
    let sizes = [
        sentences(&split.train),
        sentences(&split.validation),
        sentences(&split.test),
    ];
    ensure(sizes == [2000, 200, 200], format!("split sizes {sizes:?}"))?;
    let config = ModelConfig::desk();
    ensure(config.epochs <= 30, "desk preset exceeds 30 epochs")?;
    let start = Instant::now();
    let (_, run) = train_and_evaluate(&config, &tax, &split, 1).map_err(e)?;
    let secs = start.elapsed().as_secs_f64();
    let bow = BowBaseline::train(&split.train, tax.len(), BowConfig::default(), 1)
        .and_then(|m| m.accuracy(&split.test))
        .map_err(e)?;
    let msg = format!(
        "test {:.3} (val {:.3}, best epoch {}) vs bag-of-words {:.3} in {secs:.1}s",
        run.test_accuracy,
        run.validation_accuracy.unwrap_or(f64::NAN),
        run.training.best_epoch,
        bow
    );
    ensure(run.test_accuracy >= 0.95, msg.clone())?;
    ensure(run.test_accuracy > bow, msg.clone())?;
    ensure(secs < 300.0, msg.clone())?;
    Ok(msg)
}

fn ambiguous_accuracy(model: &Model, convs: &[Conversation]) -> f64 {
    let (mut n, mut correct) = (0usize, 0usize);
    for conv in convs {
        let out = model.predict_conversation(conv).unwrap();
        for (u, p) in conv.utterances.iter().zip(&out.predictions) {
            if is_ambiguous(u) {
                n += 1;
                correct += usize::from(Some(p.label) == u.label);
            }
        }
    }
    correct as f64 / n as f64
}

fn context_ablation() -> Outcome {
    let spec = SynthSpec::ambiguous();
    let tax = Taxonomy::swda().restrict(&spec.labels()).unwrap();
    let convs = synth_generate(&spec, &tax, 11).map_err(e)?;
    let bayes = context_free_bayes_accuracy(&convs).ok_or("no ambiguous utterances")?;
    ensure(bayes <= 0.5 + 0.02, format!("context-free Bayes accuracy {bayes:.3}"))?;
    let split = split_dataset(convs, [0.8, 0.1, 0.1], 11).map_err(e)?;
    let desk = ModelConfig::desk();
    let variants = [
        ("full", desk.clone()),
        (
            "ablated",
            ModelConfig {
                label_mode: LabelMode::None,
                context: false,
                ..desk.clone()
            },
        ),
        (
            "label-only",
            ModelConfig {
                context: false,
                ..desk.clone()
            },
        ),
        (
            "context-only",
            ModelConfig {
                label_mode: LabelMode::None,
                ..desk
            },
        ),
    ];
    let mut acc = Vec::new();
    for (_, config) in &variants {
        let (model, _) = train_and_evaluate(config, &tax, &split, 1).map_err(e)?;
        acc.push(ambiguous_accuracy(&model, &split.test));
    }
    let msg = format!(
        "ambiguous subset: full {:.3}, no label + no context {:.3}; label-only {:.3}, context-only {:.3} (informational); Bayes {bayes:.3}",
        acc[0], acc[1], acc[2], acc[3]
    );
    ensure(acc[0] - acc[1] >= 0.10, msg.clone())?;
    Ok(msg)
}

fn eight_run_protocol() -> Outcome {
    let (tax, convs) = separable();
    let split = split_dataset(convs, DEFAULT_RATIOS, 0).map_err(e)?;
    let config = ModelConfig {
        epochs: 2,
        ..ModelConfig::desk()
    };
    let seeds: Vec<u64> = (0..8).collect();
    let report = multi_seed_eval(&config, &tax, &split, &seeds, 2).map_err(e)?;
    ensure(report.runs.len() == 8, "expected 8 runs")?;
    let accs: Vec<f64> = report.runs.iter().map(|r| r.test_accuracy).collect();
    let mut total = 0.0;
    for a in &accs {
        total += a;
    }
    let mean = total / 8.0;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 7.0;
    ensure(report.mean_test_accuracy == mean, "mean is not the arithmetic mean")?;
    ensure(
        (report.std_test_accuracy - var.sqrt()).abs() <= 1e-15,
        format!("std {} vs {}", report.std_test_accuracy, var.sqrt()),
    )?;
    let same = multi_seed_eval(&config, &tax, &split, &[3; 8], 2).map_err(e)?;
    ensure(
        same.std_test_accuracy == 0.0,
        format!("identical seeds std {}", same.std_test_accuracy),
    )?;
    Ok(format!(
        "8 runs mean {:.4} std {:.4}; identical seeds std 0",
        report.mean_test_accuracy, report.std_test_accuracy
    ))
}

fn determinism_and_persistence() -> Outcome {
    let (tax, convs) = separable();
    let split = split_dataset(convs, DEFAULT_RATIOS, 0).map_err(e)?;
    let config = ModelConfig {
        epochs: 3,
        ..ModelConfig::desk()
    };
    let (a, _) = train(&config, &tax, &split.train, None, 5).map_err(e)?;
    let (b, _) = train(&config, &tax, &split.train, None, 5).map_err(e)?;
    let (ha, hb) = (checkpoint_hash(&a).map_err(e)?, checkpoint_hash(&b).map_err(e)?);
    ensure(ha == hb, format!("hashes differ: {ha} vs {hb}"))?;

    let bytes = checkpoint_bytes(&a).map_err(e)?;
    let loaded = checkpoint_from_bytes(&bytes).map_err(e)?;
    ensure(
        checkpoint_hash(&loaded).map_err(e)? == ha,
        "round trip changed the hash",
    )?;
    let before = evaluate(&a, &split.test).map_err(e)?;
    let after = evaluate(&loaded, &split.test).map_err(e)?;
    ensure(before == after, "evaluation changed after round trip")?;
    ensure(
        before.accuracy.to_bits() == after.accuracy.to_bits(),
        "accuracy bits differ",
    )?;

    let mut flipped = 0;
    for pos in [bytes.len() / 3, bytes.len() / 2, bytes.len() - 40] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x10;
        if matches!(checkpoint_from_bytes(&bad), Err(Error::HashMismatch)) {
            flipped += 1;
        }
    }
    ensure(flipped == 3, format!("only {flipped}/3 corrupt bytes detected"))?;
    Ok(format!(
        "hash {}..., bit-exact evaluation after reload, 3/3 corruptions detected",
        &ha[..12]
    ))
}

fn fallback_contract() -> Outcome {
    let (tax, convs) = separable();
    let split = split_dataset(convs, DEFAULT_RATIOS, 0).map_err(e)?;
    let config = ModelConfig {
        epochs: 1,
        ..ModelConfig::desk()
    };
    let (model, _) = train(&config, &tax, &split.train, None, 2).map_err(e)?;
    let mut rates = Vec::new();
    for i in 0..=20 {
        let t = i as f64 / 20.0;
        rates.push(
            evaluate_with_threshold(&model, &split.test, t)
                .map_err(e)?
                .fallback_rate,
        );
    }
    ensure(rates[0] == 0.0, format!("threshold 0 routed {}", rates[0]))?;
    ensure(rates[20] == 1.0, format!("threshold 1 routed {}", rates[20]))?;
    ensure(
        rates.windows(2).all(|w| w[0] <= w[1]),
        format!("not monotone: {rates:?}"),
    )?;

    // Through the rule path of a model on the full taxonomy.
    let swda = Taxonomy::swda();
    let examples = [
        ("Well, how old are you?", "qw"),
        ("Do you have to have any special training?", "yn"),
        ("Right?", "tg"),
    ];
    let texts: Vec<&str> = examples.iter().map(|(t, _)| *t).collect();
    let conv = Conversation::from_texts("examples", &texts);
    let full = Model::new(
        ModelConfig::desk(),
        swda.clone(),
        build_vocab(std::slice::from_ref(&conv)),
        0,
    )
    .map_err(e)?;
    let out = full.predict_with_threshold(&conv, 1.0).map_err(e)?;
    let rules = FallbackRuleSet::bundled();
    for ((text, tag), p) in examples.iter().zip(&out.predictions) {
        let got = swda.tag(p.label).map_err(e)?;
        ensure(
            p.used_fallback && got == *tag,
            format!("{text:?} -> {got}, expected {tag}"),
        )?;
        let tokens = tokenize(text);
        let kind = rule_classify(&rules, &tokens, &pos_tag(&rules.lexicon, &tokens));
        ensure(
            swda.coarse_label(kind) == Some(p.label),
            format!("{text:?} rule path mismatch"),
        )?;
    }
    Ok(format!(
        "rates 0 -> {}, 0.5 -> {:.3}, 1 -> {}; monotone over 21 thresholds; examples -> qw, yn, tg",
        rates[0], rates[10], rates[20]
    ))
}

fn random_conversation(rng: &mut SeededRng, id: usize, tax: &Taxonomy) -> Conversation {
    let words = [
        "yes",
        "no",
        "what",
        "well,",
        "I",
        "don't",
        "know",
        "héllo",
        "\"quoted\"",
        "uh-huh",
        "?",
        "50%",
    ];
    let n = 1 + rng.below(6);
    let texts: Vec<String> = (0..n)
        .map(|_| {
            let len = 1 + rng.below(8);
            (0..len)
                .map(|_| *rng.choose(&words).unwrap())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let mut conv = Conversation::from_texts(&format!("conv-{id}"), &texts);
    for u in &mut conv.utterances {
        if rng.below(5) > 0 {
            u.label = Some(rng.below(tax.len()));
        }
    }
    conv
}

fn taxonomy_and_formats() -> Outcome {
    let tax = Taxonomy::swda();
    ensure(tax.len() == 43, format!("SwDA taxonomy has {} tags", tax.len()))?;
    let mut rng = SeededRng::new(9);
    let convs: Vec<Conversation> = (0..100).map(|i| random_conversation(&mut rng, i, &tax)).collect();
    for c in &convs {
        let line = conversation_to_json(c, &tax).map_err(e)?;
        let back = parse_conversation(&line, &tax)?;
        ensure(&back == c, format!("round trip changed {}", c.id))?;
    }
    let split = split_dataset(convs, DEFAULT_RATIOS, 0).map_err(e)?;
    let sizes = [split.train.len(), split.validation.len(), split.test.len()];
    ensure(sizes == [87, 10, 3], format!("split sizes {sizes:?}"))?;
    Ok("43 tags; 100 conversations round-trip; split 87/10/3".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient fidelity", gradient_fidelity),
        ("layer mixing exactness", mixer_exactness),
        ("attention hand oracle", attention_hand_oracle),
        ("desk learnability", desk_learnability),
        ("context ablation", context_ablation),
        ("eight-run protocol", eight_run_protocol),
        ("determinism and persistence", determinism_and_persistence),
        ("fallback contract", fallback_contract),
        ("taxonomy and formats", taxonomy_and_formats),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| *f == n.to_string() || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n} {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n} {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
