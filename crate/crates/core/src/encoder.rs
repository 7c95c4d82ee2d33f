//! Sentence encoders behind one trait, looked up by name.

use std::fmt;

use indexmap::IndexMap;

use crate::encoder_attn::{AttentionEncoder, ContextualAttention};
use crate::encoder_lm::{BiLm, LayerMixer};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamStore, SeededRng, Tape, Var};

/// Sizes every encoder is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderDims {
    pub vocab_size: usize,
    pub d_emb: usize,
    pub gru_hidden: usize,
    pub attn_hidden: usize,
    pub attn_heads: usize,
    pub context: usize,
    pub lm_layers: usize,
    pub lm_hidden: usize,
    pub d_mix: usize,
}

/// Output of one sentence encoding on a tape.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    /// `1 x output_width` sentence vector `R`.
    pub vector: Var,
    /// `r x T` attention weights of the (first) pooling stage.
    pub attention: Var,
}

pub trait SentenceEncoder: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn output_width(&self) -> usize;

    fn init_params(&self, store: &mut ParamStore, rng: &mut SeededRng);

    /// Encodes token ids given the previous conversation state (`1 x context`).
    fn encode(&self, tape: &mut Tape, store: &ParamStore, ids: &[usize], g_prev: Var) -> Result<Encoded>;

    /// Auxiliary language-model loss, for encoders that carry one.
    fn lm_loss(&self, _tape: &mut Tape, _store: &ParamStore, _ids: &[usize]) -> Result<Option<Var>> {
        Ok(None)
    }

    /// Current layer-mixing weights, for encoders that mix layers.
    fn mixing_weights(&self, _store: &ParamStore) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }
}

impl SentenceEncoder for AttentionEncoder {
    fn name(&self) -> &'static str {
        "attention"
    }

    fn output_width(&self) -> usize {
        AttentionEncoder::output_width(self)
    }

    fn init_params(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        AttentionEncoder::init_params(self, store, rng);
    }

    fn encode(&self, tape: &mut Tape, store: &ParamStore, ids: &[usize], g_prev: Var) -> Result<Encoded> {
        let (attention, vector) = self.forward(tape, store, ids, g_prev)?;
        Ok(Encoded { vector, attention })
    }
}

/// BiLM layer stack, mixed to `d_mix` and pooled by contextual attention.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiLmEncoder {
    pub lm: BiLm,
    pub mixer: LayerMixer,
    pub attention: ContextualAttention,
}

impl BiLmEncoder {
    pub fn new(dims: &EncoderDims) -> Self {
        let lm = BiLm::new(dims.vocab_size, dims.d_emb, dims.lm_hidden, dims.lm_layers);
        let mixer = LayerMixer::new("lm.mix", lm.layer_widths(), dims.d_mix);
        let attention =
            ContextualAttention::new("lm_attn", dims.d_mix, dims.attn_hidden, dims.attn_heads, dims.context);
        Self { lm, mixer, attention }
    }
}

impl SentenceEncoder for BiLmEncoder {
    fn name(&self) -> &'static str {
        "bilm"
    }

    fn output_width(&self) -> usize {
        self.attention.output_width()
    }

    fn init_params(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        self.lm.init_params(store, rng);
        self.mixer.init_params(store, rng);
        self.attention.init_params(store, rng);
    }

    fn encode(&self, tape: &mut Tape, store: &ParamStore, ids: &[usize], g_prev: Var) -> Result<Encoded> {
        let vars = self.lm.forward(tape, store, ids)?;
        let e = self.mixer.mix(tape, store, &vars.layers)?;
        let s = self.attention.scores(tape, store, e, g_prev)?;
        let (attention, vector) = self.attention.attend(tape, s, e)?;
        Ok(Encoded { vector, attention })
    }

    fn lm_loss(&self, tape: &mut Tape, store: &ParamStore, ids: &[usize]) -> Result<Option<Var>> {
        if ids.len() < 2 || self.lm.layers == 0 {
            return Ok(None);
        }
        self.lm.loss(tape, store, ids).map(Some)
    }

    fn mixing_weights(&self, store: &ParamStore) -> Result<Option<Vec<f64>>> {
        self.mixer.weights(store).map(Some)
    }
}

/// Concatenation `[R_attention | R_bilm]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcatEncoder {
    pub attention: AttentionEncoder,
    pub bilm: BiLmEncoder,
}

impl SentenceEncoder for ConcatEncoder {
    fn name(&self) -> &'static str {
        "both-concat"
    }

    fn output_width(&self) -> usize {
        SentenceEncoder::output_width(&self.attention) + self.bilm.output_width()
    }

    fn init_params(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        SentenceEncoder::init_params(&self.attention, store, rng);
        self.bilm.init_params(store, rng);
    }

    fn encode(&self, tape: &mut Tape, store: &ParamStore, ids: &[usize], g_prev: Var) -> Result<Encoded> {
        let a = self.attention.encode(tape, store, ids, g_prev)?;
        let b = self.bilm.encode(tape, store, ids, g_prev)?;
        let vector = tape.concat_cols(&[a.vector, b.vector])?;
        Ok(Encoded {
            vector,
            attention: a.attention,
        })
    }

    fn lm_loss(&self, tape: &mut Tape, store: &ParamStore, ids: &[usize]) -> Result<Option<Var>> {
        self.bilm.lm_loss(tape, store, ids)
    }

    fn mixing_weights(&self, store: &ParamStore) -> Result<Option<Vec<f64>>> {
        self.bilm.mixing_weights(store)
    }
}

pub type EncoderFactory = fn(&EncoderDims) -> Box<dyn SentenceEncoder>;

/// Name → constructor table for sentence encoders.
#[derive(Clone)]
pub struct EncoderRegistry {
    factories: IndexMap<&'static str, EncoderFactory>,
}

impl fmt::Debug for EncoderRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl Default for EncoderRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("attention", |d| {
            Box::new(AttentionEncoder::new(
                d.vocab_size,
                d.d_emb,
                d.gru_hidden,
                d.attn_hidden,
                d.attn_heads,
                d.context,
            ))
        });
        r.register("bilm", |d| Box::new(BiLmEncoder::new(d)));
        r.register("both-concat", |d| {
            Box::new(ConcatEncoder {
                attention: AttentionEncoder::new(
                    d.vocab_size,
                    d.d_emb,
                    d.gru_hidden,
                    d.attn_hidden,
                    d.attn_heads,
                    d.context,
                ),
                bilm: BiLmEncoder::new(d),
            })
        });
        r
    }
}

impl EncoderRegistry {
    pub fn empty() -> Self {
        Self {
            factories: IndexMap::new(),
        }
    }

    /// Adds or replaces an encoder constructor.
    pub fn register(&mut self, name: &'static str, factory: EncoderFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, name: &str, dims: &EncoderDims) -> Result<Box<dyn SentenceEncoder>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown encoder {name:?}; known: {}",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        Ok(factory(dims))
    }
}

/// Encodes one sentence outside of training.
pub fn encode_ids(
    encoder: &dyn SentenceEncoder,
    store: &ParamStore,
    ids: &[usize],
    g_prev: &[f64],
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let g = tape.constant(Matrix::row_vector(g_prev));
    let out = encoder.encode(&mut tape, store, ids, g)?;
    Ok(tape.value(out.vector).data().to_vec())
}
