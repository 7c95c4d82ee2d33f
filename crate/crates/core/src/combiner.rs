//! Conversation-level GRU over sentence vectors and previous labels.
//!
//! For utterance `i`: `g_i = GRU(g_{i-1}, [R_i | label_emb(y_{i-1})])` and the
//! classifier feature is `F_i = [g_i | R_i]`. `g_{i-1}` is also what the
//! sentence encoder sees as its attention context.

use serde::{Deserialize, Serialize};

use crate::corpus::LabelId;
use crate::encoder::SentenceEncoder;
use crate::error::{Error, Result};
use crate::numerics::{GruCell, Matrix, ParamStore, SeededRng, Tape, Var};

pub const LABEL_EMBEDDING: &str = "comb.label_emb";

/// Where the previous-label feature comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// Teacher forcing with reference labels.
    Gold,
    /// The model's own previous prediction.
    Predicted,
    /// Always the NONE embedding.
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalRepr {
    #[default]
    Concat,
    StateOnly,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CombinationRnn {
    pub gru: GruCell,
    pub rep_width: usize,
    pub num_labels: usize,
    /// Label embedding width; 0 disables the previous-label input.
    pub label_dim: usize,
    /// When false every utterance starts from a zero state.
    pub context: bool,
    pub final_repr: FinalRepr,
    /// Gradient truncation length in utterances.
    pub bptt_window: Option<usize>,
}

impl CombinationRnn {
    pub fn new(rep_width: usize, hidden: usize, num_labels: usize, label_dim: usize) -> Self {
        Self {
            gru: GruCell::new("comb.gru", rep_width + label_dim, hidden),
            rep_width,
            num_labels,
            label_dim,
            context: true,
            final_repr: FinalRepr::Concat,
            bptt_window: None,
        }
    }

    pub fn hidden(&self) -> usize {
        self.gru.hidden
    }

    pub fn uses_labels(&self) -> bool {
        self.label_dim > 0
    }

    pub fn feature_width(&self) -> usize {
        match self.final_repr {
            FinalRepr::Concat => self.hidden() + self.rep_width,
            FinalRepr::StateOnly => self.hidden(),
        }
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        self.gru.init_params(store, rng);
        if self.uses_labels() {
            store.init_uniform(
                LABEL_EMBEDDING,
                self.num_labels + 1,
                self.label_dim,
                self.label_dim,
                rng,
            );
        }
    }

    pub fn zero_state(&self, tape: &mut Tape) -> Var {
        tape.constant(Matrix::zeros(1, self.hidden()))
    }

    /// One step; `prev_label` of `None` selects the NONE embedding row.
    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        g_prev: Var,
        r: Var,
        prev_label: Option<LabelId>,
    ) -> Result<(Var, Var)> {
        let input = if self.uses_labels() {
            let row = match prev_label {
                None => 0,
                Some(l) if l < self.num_labels => l + 1,
                Some(l) => {
                    return Err(Error::Index {
                        what: "label",
                        index: l,
                        size: self.num_labels,
                    })
                }
            };
            let table = tape.param(store, LABEL_EMBEDDING)?;
            let emb = tape.gather(table, &[row])?;
            tape.concat_cols(&[r, emb])?
        } else {
            r
        };
        let xw = self.gru.project_inputs(tape, store, input)?;
        let g = self.gru.step(tape, store, xw, g_prev)?;
        let f = match self.final_repr {
            FinalRepr::Concat => tape.concat_cols(&[g, r])?,
            FinalRepr::StateOnly => g,
        };
        Ok((g, f))
    }
}

pub fn combine_step(
    rnn: &CombinationRnn,
    store: &ParamStore,
    g_prev: &[f64],
    r: &[f64],
    prev_label: Option<LabelId>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::new();
    let g = tape.constant(Matrix::row_vector(g_prev));
    let r = tape.constant(Matrix::row_vector(r));
    let (g, f) = rnn.step(&mut tape, store, g, r, prev_label)?;
    Ok((tape.value(g).data().to_vec(), tape.value(f).data().to_vec()))
}

/// Tape handles for a whole conversation.
#[derive(Clone, Debug, Default)]
pub struct ConversationPass {
    pub features: Vec<Var>,
    pub states: Vec<Var>,
    pub attention: Vec<Var>,
}

pub type Predictor<'a> = dyn FnMut(&mut Tape, usize, Var) -> Result<LabelId> + 'a;

/// Runs encoder and combiner over every utterance of one conversation.
///
/// `predictor` maps `(tape, utterance index, F_i)` to a label; it is required
/// in [`LabelMode::Predicted`] and is called once per utterance in that mode.
#[allow(clippy::too_many_arguments)]
pub fn run_conversation(
    tape: &mut Tape,
    store: &ParamStore,
    rnn: &CombinationRnn,
    encoder: &dyn SentenceEncoder,
    utterances: &[Vec<usize>],
    mode: LabelMode,
    gold: Option<&[LabelId]>,
    mut predictor: Option<&mut Predictor<'_>>,
) -> Result<ConversationPass> {
    match mode {
        LabelMode::Gold => match gold {
            None => return Err(Error::Config("gold label mode needs reference labels".into())),
            Some(g) if g.len() != utterances.len() => {
                return Err(Error::Shape(format!(
                    "{} labels for {} utterances",
                    g.len(),
                    utterances.len()
                )))
            }
            Some(_) => {}
        },
        LabelMode::Predicted if predictor.is_none() => {
            return Err(Error::Config("predicted label mode needs a classifier".into()))
        }
        _ => {}
    }
    let mut pass = ConversationPass::default();
    let mut g = rnn.zero_state(tape);
    let mut prev: Option<LabelId> = None;
    for (i, ids) in utterances.iter().enumerate() {
        if !rnn.context {
            g = rnn.zero_state(tape);
        } else if let Some(w) = rnn.bptt_window {
            if w > 0 && i > 0 && i % w == 0 {
                g = tape.constant(tape.value(g).clone());
            }
        }
        let enc = encoder.encode(tape, store, ids, g)?;
        let (g_new, f) = rnn.step(tape, store, g, enc.vector, prev)?;
        prev = match mode {
            LabelMode::Gold => gold.map(|l| l[i]),
            LabelMode::Predicted => match predictor.as_mut() {
                Some(p) => Some(p(tape, i, f)?),
                None => None,
            },
            LabelMode::None => None,
        };
        g = g_new;
        pass.features.push(f);
        pass.states.push(g_new);
        pass.attention.push(enc.attention);
    }
    Ok(pass)
}
