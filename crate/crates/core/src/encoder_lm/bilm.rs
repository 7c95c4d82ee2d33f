use crate::error::{Error, Result};
use crate::numerics::{LstmCell, Matrix, ParamStore, SeededRng, Tape, Var};

/// Per-position representations from every BiLM layer. Layer 0 is the token
/// embedding (`T x d_emb`); layer `j >= 1` is `[forward_j | backward_j]`
/// (`T x 2 d_hid`).
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack {
    pub layers: Vec<Matrix>,
}

impl LayerStack {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn positions(&self) -> usize {
        self.layers.first().map_or(0, Matrix::rows)
    }
}

/// Tape handles for one BiLM pass.
#[derive(Clone, Debug)]
pub struct BiLmVars {
    pub layers: Vec<Var>,
    pub forward_top: Var,
    pub backward_top: Var,
}

/// Multi-layer bidirectional LSTM language model. The two directions never
/// read each other's states; they share the embedding and the output softmax.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiLm {
    pub prefix: String,
    pub vocab_size: usize,
    pub d_emb: usize,
    pub d_hid: usize,
    pub layers: usize,
}

impl BiLm {
    pub fn new(vocab_size: usize, d_emb: usize, d_hid: usize, layers: usize) -> Self {
        Self {
            prefix: "lm".into(),
            vocab_size,
            d_emb,
            d_hid,
            layers,
        }
    }

    pub fn embedding_name(&self) -> String {
        format!("{}.embedding", self.prefix)
    }

    fn softmax_names(&self) -> (String, String) {
        (
            format!("{}.softmax.W", self.prefix),
            format!("{}.softmax.b", self.prefix),
        )
    }

    fn cell(&self, dir: &str, layer: usize) -> LstmCell {
        let input = if layer == 0 { self.d_emb } else { self.d_hid };
        LstmCell::new(format!("{}.{dir}.{layer}", self.prefix), input, self.d_hid)
    }

    /// Widths of the layer stack, embedding first.
    pub fn layer_widths(&self) -> Vec<usize> {
        std::iter::once(self.d_emb)
            .chain(std::iter::repeat_n(2 * self.d_hid, self.layers))
            .collect()
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        store.init_uniform(self.embedding_name(), self.vocab_size, self.d_emb, self.d_emb, rng);
        for layer in 0..self.layers {
            self.cell("fwd", layer).init_params(store, rng);
            self.cell("bwd", layer).init_params(store, rng);
        }
        let (w, b) = self.softmax_names();
        store.init_uniform(w, self.d_hid, self.vocab_size, self.d_hid, rng);
        store.insert(b, Matrix::zeros(1, self.vocab_size));
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&i| i >= self.vocab_size) {
            Some(&bad) => Err(Error::Index {
                what: "token vocabulary",
                index: bad,
                size: self.vocab_size,
            }),
            None => Ok(()),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, ids: &[usize]) -> Result<BiLmVars> {
        if ids.is_empty() {
            return Err(Error::EmptyInput("token sequence"));
        }
        self.check_ids(ids)?;
        let table = tape.param(store, &self.embedding_name())?;
        let emb = tape.gather(table, ids)?;
        let mut layers = vec![emb];
        let (mut fwd, mut bwd) = (emb, emb);
        for layer in 0..self.layers {
            fwd = self.cell("fwd", layer).run(tape, store, fwd, false)?;
            bwd = self.cell("bwd", layer).run(tape, store, bwd, true)?;
            layers.push(tape.concat_cols(&[fwd, bwd])?);
        }
        Ok(BiLmVars {
            layers,
            forward_top: fwd,
            backward_top: bwd,
        })
    }

    /// Mean forward next-token cross-entropy plus mean backward
    /// previous-token cross-entropy.
    pub fn loss(&self, tape: &mut Tape, store: &ParamStore, ids: &[usize]) -> Result<Var> {
        if ids.len() < 2 {
            return Err(Error::TooShort {
                what: "language-model sequence",
                min: 2,
                got: ids.len(),
            });
        }
        if self.layers == 0 {
            return Err(Error::Config("a language-model loss needs at least one layer".into()));
        }
        let t = ids.len();
        let vars = self.forward(tape, store, ids)?;
        let (w, b) = self.softmax_names();
        let w = tape.param(store, &w)?;
        let b = tape.param(store, &b)?;
        let f_states = tape.slice_rows(vars.forward_top, 0, t - 1)?;
        let f_logits = tape.matmul(f_states, w)?;
        let f_logits = tape.add_row(f_logits, b)?;
        let f_loss = tape.cross_entropy(f_logits, &ids[1..])?;
        let b_states = tape.slice_rows(vars.backward_top, 1, t - 1)?;
        let b_logits = tape.matmul(b_states, w)?;
        let b_logits = tape.add_row(b_logits, b)?;
        let b_loss = tape.cross_entropy(b_logits, &ids[..t - 1])?;
        tape.add(f_loss, b_loss)
    }
}

/// Embedding rows for `ids`; an empty sequence gives a `0 x d_emb` matrix.
pub fn embed_tokens(lm: &BiLm, store: &ParamStore, ids: &[usize]) -> Result<Matrix> {
    lm.check_ids(ids)?;
    let table = store.value(&lm.embedding_name())?;
    let mut out = Matrix::zeros(ids.len(), lm.d_emb);
    for (r, &id) in ids.iter().enumerate() {
        out.row_mut(r).copy_from_slice(table.row(id));
    }
    Ok(out)
}

pub fn bilm_forward(lm: &BiLm, store: &ParamStore, ids: &[usize]) -> Result<LayerStack> {
    let mut tape = Tape::new();
    let vars = lm.forward(&mut tape, store, ids)?;
    Ok(LayerStack {
        layers: vars.layers.iter().map(|&v| tape.value(v).clone()).collect(),
    })
}

pub fn bilm_loss(lm: &BiLm, store: &ParamStore, ids: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let loss = lm.loss(&mut tape, store, ids)?;
    Ok(tape.scalar(loss))
}
