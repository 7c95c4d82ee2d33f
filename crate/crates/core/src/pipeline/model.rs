use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::classifier::{
    apply_fallback, prediction_from_logits, ClassifierHead, FallbackRuleSet, PosLexicon, Prediction,
    FALLBACK_RULES_TSV, POS_LEXICON_TSV,
};
use crate::combiner::{run_conversation, CombinationRnn, ConversationPass, LabelMode};
use crate::corpus::{Conversation, LabelId, Taxonomy, Utterance};
use crate::encoder::{EncoderRegistry, SentenceEncoder};
use crate::encoder_lm::{TokenVocab, UNK};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamStore, SeededRng, Tape, Var};

/// Text of the fallback rule table and its POS lexicon, kept verbatim so a
/// checkpoint carries the exact rules it was evaluated with.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSource {
    pub lexicon_tsv: String,
    pub rules_tsv: String,
}

impl Default for RuleSource {
    fn default() -> Self {
        Self {
            lexicon_tsv: POS_LEXICON_TSV.to_owned(),
            rules_tsv: FALLBACK_RULES_TSV.to_owned(),
        }
    }
}

impl RuleSource {
    pub fn build(&self) -> Result<FallbackRuleSet> {
        let lexicon = PosLexicon::parse(&self.lexicon_tsv, Path::new("<pos lexicon>"))?;
        FallbackRuleSet::parse(lexicon, &self.rules_tsv, Path::new("<fallback rules>"))
    }
}

/// Encoder, combiner and head with their parameters and label inventory.
#[derive(Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub taxonomy: Taxonomy,
    pub vocab: TokenVocab,
    pub params: ParamStore,
    rule_source: RuleSource,
    rules: FallbackRuleSet,
    encoder: Box<dyn SentenceEncoder>,
    rnn: CombinationRnn,
    head: ClassifierHead,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Self::assemble(
            self.config.clone(),
            self.taxonomy.clone(),
            self.vocab.clone(),
            self.params.clone(),
            self.rule_source.clone(),
        )
        .expect("a valid model reassembles")
    }
}

/// Per-utterance predictions for one conversation.
#[derive(Clone, Debug)]
pub struct ConversationPrediction {
    pub predictions: Vec<Prediction>,
    /// `r x T` attention weights per utterance.
    pub attention: Vec<Matrix>,
}

impl Model {
    /// Freshly initialised model.
    pub fn new(config: ModelConfig, taxonomy: Taxonomy, vocab: TokenVocab, seed: u64) -> Result<Self> {
        config.validate()?;
        if taxonomy.is_empty() {
            return Err(Error::Taxonomy("a model needs at least one label".into()));
        }
        let (encoder, rnn, head) = Self::structure(&config, &taxonomy, &vocab)?;
        let mut params = ParamStore::new();
        let mut rng = SeededRng::new(seed);
        encoder.init_params(&mut params, &mut rng);
        rnn.init_params(&mut params, &mut rng);
        head.init_params(&mut params, &mut rng);
        let rule_source = RuleSource::default();
        let rules = rule_source.build()?;
        Ok(Self {
            config,
            taxonomy,
            vocab,
            params,
            rule_source,
            rules,
            encoder,
            rnn,
            head,
        })
    }

    /// Rebuilds a model around existing parameters, checking every name and shape.
    pub fn assemble(
        config: ModelConfig,
        taxonomy: Taxonomy,
        vocab: TokenVocab,
        params: ParamStore,
        rule_source: RuleSource,
    ) -> Result<Self> {
        config.validate()?;
        let expected = Self::new(config.clone(), taxonomy.clone(), vocab.clone(), 0)?;
        let want: Vec<(&str, (usize, usize))> = expected.params.iter().map(|(n, p)| (n, p.value.shape())).collect();
        let got: Vec<(&str, (usize, usize))> = params.iter().map(|(n, p)| (n, p.value.shape())).collect();
        if want != got {
            return Err(Error::Format(
                "parameter names or shapes do not match the configuration".into(),
            ));
        }
        let rules = rule_source.build()?;
        Ok(Self {
            params,
            rule_source,
            rules,
            ..expected
        })
    }

    fn structure(
        config: &ModelConfig,
        taxonomy: &Taxonomy,
        vocab: &TokenVocab,
    ) -> Result<(Box<dyn SentenceEncoder>, CombinationRnn, ClassifierHead)> {
        let encoder = EncoderRegistry::default().build(&config.encoder, &config.encoder_dims(vocab.len()))?;
        let mut rnn = CombinationRnn::new(
            encoder.output_width(),
            config.context_hidden,
            taxonomy.len(),
            config.effective_label_dim(),
        );
        rnn.context = config.context;
        rnn.final_repr = config.final_repr;
        rnn.bptt_window = config.bptt_window;
        let head = ClassifierHead::new(taxonomy.len(), rnn.feature_width());
        Ok((encoder, rnn, head))
    }

    pub fn with_rules(mut self, source: RuleSource) -> Result<Self> {
        self.rules = source.build()?;
        self.rule_source = source;
        Ok(self)
    }

    pub fn rule_source(&self) -> &RuleSource {
        &self.rule_source
    }

    pub fn rules(&self) -> &FallbackRuleSet {
        &self.rules
    }

    pub fn encoder(&self) -> &dyn SentenceEncoder {
        self.encoder.as_ref()
    }

    pub fn combiner(&self) -> &CombinationRnn {
        &self.rnn
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    /// Token ids; an utterance with no tokens is read as a single unknown token.
    pub fn token_ids(&self, u: &Utterance) -> Vec<usize> {
        if u.tokens.is_empty() {
            vec![UNK]
        } else {
            self.vocab.ids(&u.tokens)
        }
    }

    fn conversation_ids(&self, conv: &Conversation) -> Vec<Vec<usize>> {
        conv.utterances.iter().map(|u| self.token_ids(u)).collect()
    }

    fn gold_labels(conv: &Conversation) -> Result<Vec<LabelId>> {
        conv.utterances
            .iter()
            .map(|u| {
                u.label.ok_or_else(|| {
                    Error::Config(format!("conversation {:?} utterance {} has no label", conv.id, u.index))
                })
            })
            .collect()
    }

    /// Summed cross-entropy over one fully labelled conversation under teacher
    /// forcing, plus the weighted language-model loss when configured.
    /// Returns the loss node and the number of classified utterances.
    pub fn conversation_loss(
        &self,
        tape: &mut Tape,
        conv: &Conversation,
        dropout: Option<&mut SeededRng>,
    ) -> Result<(Var, usize)> {
        self.loss_with_params(&self.params, tape, conv, dropout)
    }

    /// [`Model::conversation_loss`] evaluated at `params` instead of the model's own.
    pub fn loss_with_params(
        &self,
        params: &ParamStore,
        tape: &mut Tape,
        conv: &Conversation,
        dropout: Option<&mut SeededRng>,
    ) -> Result<(Var, usize)> {
        let gold = Self::gold_labels(conv)?;
        if gold.is_empty() {
            return Err(Error::EmptyInput("conversation"));
        }
        let ids = self.conversation_ids(conv);
        let mode = match self.config.label_mode {
            LabelMode::None => LabelMode::None,
            _ => LabelMode::Gold,
        };
        let pass = run_conversation(
            tape,
            params,
            &self.rnn,
            self.encoder.as_ref(),
            &ids,
            mode,
            Some(&gold),
            None,
        )?;
        let mut features = tape.concat_rows(&pass.features)?;
        if let Some(rng) = dropout {
            let p = self.config.dropout;
            if p > 0.0 {
                let (r, c) = tape.shape(features);
                let keep = 1.0 / (1.0 - p);
                let mask: Vec<f64> = (0..r * c)
                    .map(|_| if rng.next_f64() < p { 0.0 } else { keep })
                    .collect();
                let mask = tape.constant(Matrix::from_vec(r, c, mask)?);
                features = tape.mul(features, mask)?;
            }
        }
        let logits = self.head.logits(tape, params, features)?;
        let mean = tape.cross_entropy(logits, &gold)?;
        let mut loss = tape.scale(mean, gold.len() as f64);
        if self.config.lm_weight > 0.0 {
            for utt in &ids {
                if let Some(lm) = self.encoder.lm_loss(tape, params, utt)? {
                    let weighted = tape.scale(lm, self.config.lm_weight);
                    loss = tape.add(loss, weighted)?;
                }
            }
        }
        Ok((loss, gold.len()))
    }

    /// Inference with the model's own previous predictions as label feature.
    pub fn predict_conversation(&self, conv: &Conversation) -> Result<ConversationPrediction> {
        self.predict_with_threshold(conv, self.config.fallback_threshold)
    }

    pub fn predict_with_threshold(&self, conv: &Conversation, threshold: f64) -> Result<ConversationPrediction> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("fallback threshold {threshold} outside [0, 1]")));
        }
        let ids = self.conversation_ids(conv);
        let mut tape = Tape::new();
        let mut predictions: Vec<Prediction> = Vec::with_capacity(ids.len());
        let mut predictor = |tape: &mut Tape, i: usize, f: Var| -> Result<LabelId> {
            let logits = self.head.logits(tape, &self.params, f)?;
            let p = prediction_from_logits(tape.value(logits).data());
            let p = apply_fallback(p, &self.rules, &self.taxonomy, &conv.utterances[i].tokens, threshold);
            let label = p.label;
            predictions.push(p);
            Ok(label)
        };
        let pass: ConversationPass = run_conversation(
            &mut tape,
            &self.params,
            &self.rnn,
            self.encoder.as_ref(),
            &ids,
            LabelMode::Predicted,
            None,
            Some(&mut predictor),
        )?;
        let attention = pass.attention.iter().map(|&a| tape.value(a).clone()).collect();
        Ok(ConversationPrediction { predictions, attention })
    }
}

/// Vocabulary over every token of `convs` in first-seen order.
pub fn build_vocab(convs: &[Conversation]) -> TokenVocab {
    TokenVocab::build(
        convs
            .iter()
            .flat_map(|c| &c.utterances)
            .flat_map(|u| &u.tokens)
            .map(String::as_str),
    )
}
