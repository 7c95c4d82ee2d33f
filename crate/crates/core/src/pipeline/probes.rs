//! Finite-difference probes for every parameterised operation, by module name.

use indexmap::IndexMap;
use serde::Serialize;

use super::{build_vocab, Model, ModelConfig};
use crate::classifier::ClassifierHead;
use crate::combiner::{run_conversation, CombinationRnn, LabelMode};
use crate::corpus::{synth_generate, SynthSpec, Taxonomy};
use crate::encoder::{EncoderDims, EncoderRegistry};
use crate::encoder_attn::{BiGru, ContextualAttention};
use crate::encoder_lm::{BiLm, LayerMixer};
use crate::error::{Error, Result};
use crate::numerics::{grad_check, GradReport, Matrix, ParamStore, SeededRng, Tape, Var};

/// Largest accepted relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub type ProbeFn = fn(u64) -> Result<GradReport>;

#[derive(Clone, Copy)]
pub struct GradProbe {
    pub name: &'static str,
    pub description: &'static str,
    pub run: ProbeFn,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeResult {
    pub module: String,
    pub seeds: Vec<u64>,
    pub max_rel_error: f64,
    /// Name of the parameter with the largest error.
    pub worst_param: String,
    pub passed: bool,
}

#[derive(Clone)]
pub struct ProbeRegistry {
    probes: IndexMap<&'static str, GradProbe>,
}

impl Default for ProbeRegistry {
    fn default() -> Self {
        let mut r = Self {
            probes: IndexMap::new(),
        };
        let all: [(&'static str, &'static str, ProbeFn); 7] = [
            ("bilm", "bidirectional LSTM language-model loss", probe_bilm),
            ("mixer", "softmax layer mixing with projections and scale", probe_mixer),
            ("bigru", "bidirectional GRU over input rows", probe_bigru),
            (
                "attention",
                "context-conditioned multi-head attention pooling",
                probe_attention,
            ),
            (
                "combiner",
                "conversation GRU with attention feedback and label input",
                probe_combiner,
            ),
            ("head", "softmax classifier cross-entropy", probe_head),
            ("model", "whole model conversation loss", probe_model),
        ];
        for (name, description, run) in all {
            r.register(GradProbe { name, description, run });
        }
        r
    }
}

impl ProbeRegistry {
    pub fn register(&mut self, probe: GradProbe) {
        self.probes.insert(probe.name, probe);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.probes.keys().copied()
    }

    pub fn probes(&self) -> impl Iterator<Item = &GradProbe> {
        self.probes.values()
    }

    pub fn get(&self, name: &str) -> Result<&GradProbe> {
        self.probes.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown gradcheck module {name:?}; known: {}",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn run(&self, name: &str, seeds: &[u64]) -> Result<ProbeResult> {
        let probe = self.get(name)?;
        let mut worst = (0.0f64, String::new());
        for &seed in seeds {
            let report = (probe.run)(seed).map_err(|e| Error::Seed {
                seed,
                source: Box::new(e),
            })?;
            for p in &report.params {
                if p.max_rel_error > worst.0 || worst.1.is_empty() {
                    worst = (p.max_rel_error.max(worst.0), p.name.clone());
                }
            }
        }
        Ok(ProbeResult {
            module: name.to_owned(),
            seeds: seeds.to_vec(),
            max_rel_error: worst.0,
            worst_param: worst.1,
            passed: worst.0 < GRADCHECK_TOLERANCE,
        })
    }

    pub fn run_all(&self, seeds: &[u64]) -> Result<Vec<ProbeResult>> {
        self.names().map(|n| self.run(n, seeds)).collect()
    }
}

/// `Σ (v ⊙ P)` for a fixed random `P`, so every output entry matters.
fn weighted_sum(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.shape(v);
    let p = tape.constant(SeededRng::new(seed).uniform_matrix(r, c, 1.0));
    let prod = tape.mul(v, p)?;
    Ok(tape.sum(prod))
}

/// Runs `build` on a fresh tape and leaves its gradients in the store.
fn check<F>(store: &ParamStore, build: F) -> Result<GradReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    grad_check(store, |params| {
        let mut tape = Tape::new();
        let loss = build(&mut tape, params)?;
        tape.backward(loss)?;
        tape.accumulate_into(params)?;
        Ok(tape.scalar(loss))
    })
}

fn probe_bilm(seed: u64) -> Result<GradReport> {
    let lm = BiLm::new(7, 3, 3, 2);
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(seed);
    lm.init_params(&mut store, &mut rng);
    let ids: Vec<usize> = (0..5).map(|_| rng.below(7)).collect();
    check(&store, |tape, s| lm.loss(tape, s, &ids))
}

fn probe_mixer(seed: u64) -> Result<GradReport> {
    let mixer = LayerMixer::new("mix", vec![3, 4, 4], 3);
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(seed);
    mixer.init_params(&mut store, &mut rng);
    store.insert(mixer.raw_name(), rng.uniform_matrix(1, 3, 1.0));
    store.insert(mixer.gamma_name(), Matrix::scalar(rng.uniform(0.5, 1.5)));
    for (j, w) in [3, 4, 4].into_iter().enumerate() {
        store.insert(format!("input.{j}"), rng.uniform_matrix(4, w, 1.0));
    }
    check(&store, |tape, s| {
        let layers = (0..3)
            .map(|j| tape.param(s, &format!("input.{j}")))
            .collect::<Result<Vec<_>>>()?;
        let e = mixer.mix(tape, s, &layers)?;
        weighted_sum(tape, e, seed)
    })
}

fn probe_bigru(seed: u64) -> Result<GradReport> {
    let gru = BiGru::new("gru", 3, 3);
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(seed);
    gru.init_params(&mut store, &mut rng);
    store.insert("input", rng.uniform_matrix(5, 3, 1.0));
    check(&store, |tape, s| {
        let x = tape.param(s, "input")?;
        let h = gru.run(tape, s, x)?;
        weighted_sum(tape, h, seed)
    })
}

fn probe_attention(seed: u64) -> Result<GradReport> {
    let att = ContextualAttention::new("attn", 4, 3, 2, 3);
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(seed);
    att.init_params(&mut store, &mut rng);
    store.insert(att.name("b"), rng.uniform_matrix(1, 3, 0.5));
    store.insert("states", rng.uniform_matrix(5, 4, 1.0));
    store.insert("g_prev", rng.uniform_matrix(1, 3, 1.0));
    check(&store, |tape, s| {
        let h = tape.param(s, "states")?;
        let g = tape.param(s, "g_prev")?;
        let scores = att.scores(tape, s, h, g)?;
        let (_, r) = att.attend(tape, scores, h)?;
        weighted_sum(tape, r, seed)
    })
}

fn probe_combiner(seed: u64) -> Result<GradReport> {
    let dims = EncoderDims {
        vocab_size: 9,
        d_emb: 3,
        gru_hidden: 2,
        attn_hidden: 3,
        attn_heads: 2,
        context: 3,
        lm_layers: 1,
        lm_hidden: 2,
        d_mix: 3,
    };
    let encoder = EncoderRegistry::default().build("attention", &dims)?;
    let rnn = CombinationRnn::new(encoder.output_width(), 3, 3, 2);
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(seed);
    encoder.init_params(&mut store, &mut rng);
    rnn.init_params(&mut store, &mut rng);
    store.insert("attn.b", rng.uniform_matrix(1, 3, 0.5));
    let utts: Vec<Vec<usize>> = (0..3).map(|i| (0..2 + i).map(|_| rng.below(9)).collect()).collect();
    let labels: Vec<usize> = (0..3).map(|_| rng.below(3)).collect();
    check(&store, |tape, s| {
        let pass = run_conversation(
            tape,
            s,
            &rnn,
            encoder.as_ref(),
            &utts,
            LabelMode::Gold,
            Some(&labels),
            None,
        )?;
        let f = tape.concat_rows(&pass.features)?;
        weighted_sum(tape, f, seed)
    })
}

fn probe_head(seed: u64) -> Result<GradReport> {
    let head = ClassifierHead::new(4, 5);
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(seed);
    head.init_params(&mut store, &mut rng);
    store.insert("head.b_out", rng.uniform_matrix(1, 4, 0.5));
    store.insert("features", rng.uniform_matrix(3, 5, 1.0));
    let targets: Vec<usize> = (0..3).map(|_| rng.below(4)).collect();
    check(&store, |tape, s| {
        let f = tape.param(s, "features")?;
        let z = head.logits(tape, s, f)?;
        tape.cross_entropy(z, &targets)
    })
}

fn probe_model(seed: u64) -> Result<GradReport> {
    let spec = SynthSpec::separable();
    let taxonomy = Taxonomy::swda().restrict(&spec.labels())?;
    let convs = synth_generate(&spec, &taxonomy, seed)?;
    let conv = crate::corpus::Conversation {
        utterances: convs[0].utterances[..3].to_vec(),
        ..convs[0].clone()
    };
    let config = ModelConfig {
        encoder: "both-concat".into(),
        d_emb: 2,
        gru_hidden: 2,
        attn_hidden: 2,
        attn_heads: 2,
        lm_layers: 1,
        lm_hidden: 2,
        d_mix: 2,
        context_hidden: 2,
        label_dim: 2,
        lm_weight: 0.5,
        ..ModelConfig::desk()
    };
    let model = Model::new(config, taxonomy, build_vocab(std::slice::from_ref(&conv)), seed)?;
    check(&model.params, |tape, s| {
        model.loss_with_params(s, tape, &conv, None).map(|(l, _)| l)
    })
}
