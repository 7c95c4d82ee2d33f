//! Bidirectional GRU token encoder and context-conditioned multi-head
//! self-attention pooling.
//!
//! ```text
//! S = W_s2 · tanh(W_s1 · Hᵀ + W_s3 · g_prev + b)      r x T
//! A = softmax over T, per row
//! M = A · H                                           r x 2u
//! R = flatten(M)
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{GruCell, Matrix, ParamStore, SeededRng, Tape, Var};

/// Forward and backward GRUs whose states are concatenated per position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiGru {
    pub forward: GruCell,
    pub backward: GruCell,
}

impl BiGru {
    pub fn new(prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            forward: GruCell::new(format!("{prefix}.fwd"), input, hidden),
            backward: GruCell::new(format!("{prefix}.bwd"), input, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn output_width(&self) -> usize {
        2 * self.forward.hidden
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        self.forward.init_params(store, rng);
        self.backward.init_params(store, rng);
    }

    /// `T x 2u` states, `[forward | backward]` per row.
    pub fn run(&self, tape: &mut Tape, store: &ParamStore, xs: Var) -> Result<Var> {
        if tape.shape(xs).0 == 0 {
            return Err(Error::EmptyInput("token sequence"));
        }
        let h0 = tape.constant(Matrix::zeros(1, self.hidden()));
        let f = self.forward.run(tape, store, xs, h0, false)?;
        let b = self.backward.run(tape, store, xs, h0, true)?;
        tape.concat_cols(&[f, b])
    }
}

pub fn bigru_encode(gru: &BiGru, store: &ParamStore, embeddings: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let xs = tape.constant(embeddings.clone());
    let h = gru.run(&mut tape, store, xs)?;
    Ok(tape.value(h).clone())
}

/// Multi-head self-attention whose scores are shifted by the previous
/// conversation state `g_prev`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextualAttention {
    pub prefix: String,
    pub input: usize,
    pub hidden: usize,
    pub heads: usize,
    pub context: usize,
}

impl ContextualAttention {
    pub fn new(prefix: impl Into<String>, input: usize, hidden: usize, heads: usize, context: usize) -> Self {
        Self {
            prefix: prefix.into(),
            input,
            hidden,
            heads,
            context,
        }
    }

    pub fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn output_width(&self) -> usize {
        self.heads * self.input
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        store.init_uniform(self.name("W_s1"), self.hidden, self.input, self.input, rng);
        store.init_uniform(self.name("W_s2"), self.heads, self.hidden, self.hidden, rng);
        store.init_uniform(self.name("W_s3"), self.hidden, self.context, self.context, rng);
        store.insert(self.name("b"), Matrix::zeros(1, self.hidden));
    }

    /// Scores `S` (`r x T`) for states `h` (`T x input`) and `g_prev` (`1 x context`).
    pub fn scores(&self, tape: &mut Tape, store: &ParamStore, h: Var, g_prev: Var) -> Result<Var> {
        let w1 = tape.param(store, &self.name("W_s1"))?;
        let w2 = tape.param(store, &self.name("W_s2"))?;
        let w3 = tape.param(store, &self.name("W_s3"))?;
        let b = tape.param(store, &self.name("b"))?;
        let hw = tape.matmul_t(h, w1)?;
        let ctx = tape.matmul_t(g_prev, w3)?;
        let shift = tape.add(ctx, b)?;
        let pre = tape.add_row(hw, shift)?;
        let act = tape.tanh(pre);
        let st = tape.matmul_t(act, w2)?;
        Ok(tape.transpose(st))
    }

    /// Returns `(A, R)`: the attention weights and the flattened `A · H`.
    pub fn attend(&self, tape: &mut Tape, scores: Var, h: Var) -> Result<(Var, Var)> {
        let a = tape.softmax_rows(scores);
        let m = tape.matmul(a, h)?;
        let (r, c) = tape.shape(m);
        let flat = tape.reshape(m, 1, r * c)?;
        Ok((a, flat))
    }
}

pub fn attention_scores(att: &ContextualAttention, store: &ParamStore, h: &Matrix, g_prev: &[f64]) -> Result<Matrix> {
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let g = tape.constant(Matrix::row_vector(g_prev));
    let s = att.scores(&mut tape, store, hv, g)?;
    Ok(tape.value(s).clone())
}

/// Attention pooling output for one sentence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SentenceRepresentation {
    /// `r x T` attention weights.
    pub weights: Matrix,
    /// `r x width` pooled matrix `M`.
    pub pooled: Matrix,
    /// `M` flattened row-major.
    pub vector: Vec<f64>,
}

pub fn attend(scores: &Matrix, h: &Matrix) -> Result<SentenceRepresentation> {
    let weights = scores.softmax_rows();
    let pooled = weights.matmul(h)?;
    let vector = pooled.data().to_vec();
    Ok(SentenceRepresentation {
        weights,
        pooled,
        vector,
    })
}

/// Word embedding, BiGRU and contextual attention.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionEncoder {
    pub vocab_size: usize,
    pub d_emb: usize,
    pub gru: BiGru,
    pub attention: ContextualAttention,
}

pub const EMBEDDING: &str = "emb";

impl AttentionEncoder {
    pub fn new(
        vocab_size: usize,
        d_emb: usize,
        hidden: usize,
        attn_hidden: usize,
        heads: usize,
        context: usize,
    ) -> Self {
        let gru = BiGru::new("gru", d_emb, hidden);
        let attention = ContextualAttention::new("attn", gru.output_width(), attn_hidden, heads, context);
        Self {
            vocab_size,
            d_emb,
            gru,
            attention,
        }
    }

    pub fn output_width(&self) -> usize {
        self.attention.output_width()
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        store.init_uniform(EMBEDDING, self.vocab_size, self.d_emb, self.d_emb, rng);
        self.gru.init_params(store, rng);
        self.attention.init_params(store, rng);
    }

    /// Returns `(A, R)` for token ids and the previous conversation state.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, ids: &[usize], g_prev: Var) -> Result<(Var, Var)> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab_size) {
            return Err(Error::Index {
                what: "token vocabulary",
                index: bad,
                size: self.vocab_size,
            });
        }
        let table = tape.param(store, EMBEDDING)?;
        let xs = tape.gather(table, ids)?;
        let h = self.gru.run(tape, store, xs)?;
        let s = self.attention.scores(tape, store, h, g_prev)?;
        self.attention.attend(tape, s, h)
    }
}

pub fn encode_sentence(
    enc: &AttentionEncoder,
    store: &ParamStore,
    ids: &[usize],
    g_prev: &[f64],
) -> Result<SentenceRepresentation> {
    let mut tape = Tape::new();
    let g = tape.constant(Matrix::row_vector(g_prev));
    let (a, r) = enc.forward(&mut tape, store, ids, g)?;
    let weights = tape.value(a).clone();
    let vector = tape.value(r).data().to_vec();
    let pooled = Matrix::from_vec(enc.attention.heads, enc.attention.input, vector.clone())?;
    Ok(SentenceRepresentation {
        weights,
        pooled,
        vector,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn setup(seed: u64) -> (ContextualAttention, ParamStore, Matrix, Vec<f64>) {
        let att = ContextualAttention::new("attn", 4, 3, 2, 5);
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(seed);
        att.init_params(&mut store, &mut rng);
        store.insert(att.name("b"), rng.uniform_matrix(1, 3, 0.5));
        let h = rng.uniform_matrix(6, 4, 1.0);
        let g: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect();
        (att, store, h, g)
    }

    #[test]
    fn scores_match_a_loop_oracle() {
        let (att, store, h, g) = setup(1);
        let w1 = store.value("attn.W_s1").unwrap();
        let w2 = store.value("attn.W_s2").unwrap();
        let w3 = store.value("attn.W_s3").unwrap();
        let b = store.value("attn.b").unwrap();
        let s = attention_scores(&att, &store, &h, &g).unwrap();
        assert_eq!(s.shape(), (2, 6));
        for t in 0..6 {
            let inner: Vec<f64> = (0..3)
                .map(|i| {
                    let mut z = b.get(0, i);
                    for k in 0..4 {
                        z += w1.get(i, k) * h.get(t, k);
                    }
                    for (k, gk) in g.iter().enumerate() {
                        z += w3.get(i, k) * gk;
                    }
                    z.tanh()
                })
                .collect();
            for head in 0..2 {
                let want: f64 = (0..3).map(|i| w2.get(head, i) * inner[i]).sum();
                assert!((s.get(head, t) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_score_weights_give_uniform_attention() {
        let (att, mut store, h, g) = setup(2);
        store.get_mut("attn.W_s2").unwrap().value.fill(0.0);
        let rep = attend(&attention_scores(&att, &store, &h, &g).unwrap(), &h).unwrap();
        for &w in rep.weights.data() {
            assert!((w - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_context_equals_zero_context_weights() {
        let (att, store, h, _) = setup(3);
        let zero_g = attention_scores(&att, &store, &h, &[0.0; 5]).unwrap();
        let mut no_w3 = store.clone();
        no_w3.get_mut("attn.W_s3").unwrap().value.fill(0.0);
        let g: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let zero_w = attention_scores(&att, &no_w3, &h, &g).unwrap();
        assert_eq!(zero_g, zero_w);
    }

    #[test]
    fn bigru_shapes_and_zero_parameters() {
        let gru = BiGru::new("gru", 3, 4);
        let mut store = ParamStore::new();
        gru.init_params(&mut store, &mut SeededRng::new(4));
        let x = SeededRng::new(5).uniform_matrix(7, 3, 1.0);
        assert_eq!(bigru_encode(&gru, &store, &x).unwrap().shape(), (7, 8));
        for (_, p) in store.iter_mut() {
            p.value.fill(0.0);
        }
        assert_eq!(bigru_encode(&gru, &store, &x).unwrap().max_abs(), 0.0);
        assert!(bigru_encode(&gru, &store, &Matrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn encoder_output_width() {
        let enc = AttentionEncoder::new(10, 4, 3, 5, 2, 6);
        let mut store = ParamStore::new();
        enc.init_params(&mut store, &mut SeededRng::new(6));
        let rep = encode_sentence(&enc, &store, &[4, 5, 9], &[0.0; 6]).unwrap();
        assert_eq!(rep.vector.len(), enc.output_width());
        assert_eq!(rep.weights.shape(), (2, 3));
        assert!(encode_sentence(&enc, &store, &[10], &[0.0; 6]).is_err());
    }

    proptest! {
        #[test]
        fn pooling_is_permutation_invariant(seed in 0u64..200, rot in 1usize..6) {
            let (att, store, h, g) = setup(seed);
            let rep = attend(&attention_scores(&att, &store, &h, &g).unwrap(), &h).unwrap();
            let rows: Vec<Vec<f64>> = (0..6).map(|t| h.row((t + rot) % 6).to_vec()).collect();
            let hp = Matrix::from_rows(&rows).unwrap();
            let rep_p = attend(&attention_scores(&att, &store, &hp, &g).unwrap(), &hp).unwrap();
            for (a, b) in rep.vector.iter().zip(&rep_p.vector) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn pooled_rows_stay_within_state_bounds(seed in 0u64..200) {
            let (att, store, h, g) = setup(seed);
            let rep = attend(&attention_scores(&att, &store, &h, &g).unwrap(), &h).unwrap();
            for head in 0..2 {
                prop_assert!((rep.weights.row(head).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for c in 0..4 {
                    let col: Vec<f64> = (0..6).map(|t| h.get(t, c)).collect();
                    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let v = rep.pooled.get(head, c);
                    prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }
    }
}
