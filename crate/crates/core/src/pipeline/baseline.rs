use serde::Serialize;

use crate::corpus::{Conversation, LabelId};
use crate::encoder_lm::TokenVocab;
use crate::error::{Error, Result};
use crate::numerics::{Adam, AdamConfig, Matrix, ParamStore, SeededRng, Tape};

use super::build_vocab;

/// Multinomial logistic regression on normalised bag-of-words counts. It
/// sees neither word order nor conversation context.
#[derive(Clone, Debug)]
pub struct BowBaseline {
    vocab: TokenVocab,
    params: ParamStore,
    num_labels: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BowConfig {
    pub steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for BowConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            lr: 0.05,
            weight_decay: 0.0,
        }
    }
}

impl BowBaseline {
    fn features(&self, tokens: &[String]) -> Vec<f64> {
        let mut x = vec![0.0; self.vocab.len()];
        for t in tokens {
            x[self.vocab.id(t)] += 1.0;
        }
        let n = tokens.len().max(1) as f64;
        x.iter_mut().for_each(|v| *v /= n);
        x
    }

    /// Full-batch Adam on the labelled utterances of `convs`.
    pub fn train(convs: &[Conversation], num_labels: usize, config: BowConfig, seed: u64) -> Result<Self> {
        let vocab = build_vocab(convs);
        let mut model = Self {
            params: ParamStore::new(),
            vocab,
            num_labels,
        };
        let mut rows = Vec::new();
        let mut labels: Vec<LabelId> = Vec::new();
        for u in convs.iter().flat_map(|c| &c.utterances) {
            if let Some(l) = u.label {
                rows.push(model.features(&u.tokens));
                labels.push(l);
            }
        }
        if labels.is_empty() {
            return Err(Error::EmptyInput("labelled training utterances"));
        }
        let x = Matrix::from_rows(&rows)?;
        let mut rng = SeededRng::new(seed);
        model
            .params
            .init_uniform("bow.W", num_labels, model.vocab.len(), model.vocab.len(), &mut rng);
        model.params.insert("bow.b", Matrix::zeros(1, num_labels));
        let mut adam = Adam::new(AdamConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..AdamConfig::default()
        });
        for _ in 0..config.steps {
            model.params.zero_grads();
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let w = tape.param(&model.params, "bow.W")?;
            let b = tape.param(&model.params, "bow.b")?;
            let z = tape.matmul_t(xv, w)?;
            let z = tape.add_row(z, b)?;
            let loss = tape.cross_entropy(z, &labels)?;
            tape.backward(loss)?;
            tape.accumulate_into(&mut model.params)?;
            adam.step(&mut model.params)?;
        }
        Ok(model)
    }

    pub fn predict(&self, tokens: &[String]) -> Result<LabelId> {
        let x = Matrix::row_vector(&self.features(tokens));
        let z = x
            .matmul_t(self.params.value("bow.W")?)?
            .add(self.params.value("bow.b")?)?;
        let mut best = 0;
        for (i, &v) in z.data().iter().enumerate() {
            if v > z.data()[best] {
                best = i;
            }
        }
        debug_assert!(best < self.num_labels);
        Ok(best)
    }

    pub fn accuracy(&self, convs: &[Conversation]) -> Result<f64> {
        let mut total = 0usize;
        let mut correct = 0usize;
        for u in convs.iter().flat_map(|c| &c.utterances) {
            if let Some(l) = u.label {
                total += 1;
                correct += usize::from(self.predict(&u.tokens)? == l);
            }
        }
        if total == 0 {
            return Err(Error::EmptyEval);
        }
        Ok(correct as f64 / total as f64)
    }
}
