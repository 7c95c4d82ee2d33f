//! Softmax head, confidence-gated rule fallback, and accuracy metrics.

mod metrics;
mod rules;

use serde::{Deserialize, Serialize};

pub use metrics::{accuracy, confusion_matrix};
pub use rules::{
    pos_tag, rule_classify, CoarseType, FallbackRuleSet, PosLexicon, PosTag, RulePattern, FALLBACK_RULES_TSV,
    POS_LEXICON_TSV,
};

use crate::corpus::{LabelId, Taxonomy};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamStore, SeededRng, Tape, Var};

pub const W_OUT: &str = "head.W_out";
pub const B_OUT: &str = "head.b_out";

/// Linear softmax layer mapping a final representation to label logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassifierHead {
    pub num_labels: usize,
    pub input_width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: LabelId,
    /// Largest entry of `distribution`.
    pub confidence: f64,
    pub distribution: Vec<f64>,
    pub used_fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse: Option<CoarseType>,
}

impl ClassifierHead {
    pub fn new(num_labels: usize, input_width: usize) -> Self {
        Self {
            num_labels,
            input_width,
        }
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        store.init_uniform(W_OUT, self.num_labels, self.input_width, self.input_width, rng);
        store.insert(B_OUT, Matrix::zeros(1, self.num_labels));
    }

    /// Logits `F · W_out^T + b_out` for a `1 x |F|` (or `n x |F|`) input.
    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, features: Var) -> Result<Var> {
        let w = tape.param(store, W_OUT)?;
        let b = tape.param(store, B_OUT)?;
        let z = tape.matmul_t(features, w)?;
        tape.add_row(z, b)
    }

    pub fn classify(&self, store: &ParamStore, features: &[f64]) -> Result<Prediction> {
        let w = store.value(W_OUT)?;
        if features.len() != w.cols() {
            return Err(Error::Dimension {
                op: "classify",
                left: (1, features.len()),
                right: w.shape(),
            });
        }
        let logits = Matrix::row_vector(features).matmul_t(w)?.add(store.value(B_OUT)?)?;
        Ok(prediction_from_logits(logits.data()))
    }
}

/// Softmax distribution and argmax (lowest id on ties).
pub fn prediction_from_logits(logits: &[f64]) -> Prediction {
    let distribution = Matrix::row_vector(logits).softmax_rows().into_vec();
    let mut label = 0;
    for (i, &p) in distribution.iter().enumerate() {
        if p > distribution[label] {
            label = i;
        }
    }
    Prediction {
        label,
        confidence: distribution[label],
        distribution,
        used_fallback: false,
        coarse: None,
    }
}

/// Replaces a prediction whose confidence is below `threshold` with the rule
/// classifier's answer. The neural distribution is kept either way.
///
/// If the taxonomy has no label for the coarse type the neural label stands,
/// but the prediction is still marked as routed.
pub fn apply_fallback(
    mut prediction: Prediction,
    rules: &FallbackRuleSet,
    taxonomy: &Taxonomy,
    tokens: &[String],
    threshold: f64,
) -> Prediction {
    if prediction.confidence >= threshold {
        return prediction;
    }
    let tags = pos_tag(&rules.lexicon, tokens);
    let kind = rule_classify(rules, tokens, &tags);
    prediction.used_fallback = true;
    prediction.coarse = Some(kind);
    if let Some(label) = taxonomy.coarse_label(kind) {
        prediction.label = label;
    }
    prediction
}

pub fn predict_with_fallback(
    head: &ClassifierHead,
    store: &ParamStore,
    features: &[f64],
    rules: &FallbackRuleSet,
    taxonomy: &Taxonomy,
    tokens: &[String],
    threshold: f64,
) -> Result<Prediction> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("fallback threshold {threshold} outside [0, 1]")));
    }
    let p = head.classify(store, features)?;
    Ok(apply_fallback(p, rules, taxonomy, tokens, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use proptest::prelude::*;

    fn zero_head(labels: usize, width: usize) -> (ClassifierHead, ParamStore) {
        let head = ClassifierHead::new(labels, width);
        let mut store = ParamStore::new();
        head.init_params(&mut store, &mut SeededRng::new(0));
        store.get_mut(W_OUT).unwrap().value.fill(0.0);
        (head, store)
    }

    #[test]
    fn zero_head_is_uniform_with_lowest_id() {
        let (head, store) = zero_head(4, 3);
        let p = head.classify(&store, &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(p.label, 0);
        assert!((p.confidence - 0.25).abs() < 1e-15);
        assert!((p.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dominated_logit_wins() {
        let (head, mut store) = zero_head(4, 3);
        store.get_mut(B_OUT).unwrap().value.set(0, 2, 10.0);
        let p = head.classify(&store, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(p.label, 2);
        assert!(p.confidence > 0.99);
    }

    #[test]
    fn shape_mismatch() {
        let (head, store) = zero_head(4, 3);
        assert!(head.classify(&store, &[1.0]).is_err());
    }

    #[test]
    fn fallback_thresholds() {
        let tax = Taxonomy::swda();
        let rules = FallbackRuleSet::bundled();
        let head = ClassifierHead::new(tax.len(), 2);
        let mut store = ParamStore::new();
        head.init_params(&mut store, &mut SeededRng::new(4));
        let tokens = tokenize("Right?");
        let f = [0.5, -0.5];

        let p = predict_with_fallback(&head, &store, &f, &rules, &tax, &tokens, 0.0).unwrap();
        assert!(!p.used_fallback);
        let p = predict_with_fallback(&head, &store, &f, &rules, &tax, &tokens, 1.0).unwrap();
        assert!(p.used_fallback);
        assert_eq!(p.label, tax.id("tg").unwrap());
        assert_eq!(p.coarse, Some(CoarseType::TagQuestion));
        assert!(predict_with_fallback(&head, &store, &f, &rules, &tax, &tokens, 1.5).is_err());
    }

    #[test]
    fn confidence_equal_to_threshold_stays_neural() {
        let tax = Taxonomy::swda();
        let rules = FallbackRuleSet::bundled();
        let p = prediction_from_logits(&[0.0, 0.0]);
        assert_eq!(p.confidence, 0.5);
        let routed = apply_fallback(p, &rules, &tax, &tokenize("Right?"), 0.5);
        assert!(!routed.used_fallback);
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_positive_scaling(
            logits in proptest::collection::vec(-20.0f64..20.0, 1..10),
            c in 0.01f64..50.0,
        ) {
            let a = prediction_from_logits(&logits);
            let scaled: Vec<f64> = logits.iter().map(|v| v * c).collect();
            let b = prediction_from_logits(&scaled);
            prop_assert_eq!(a.label, b.label);
            prop_assert!((a.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert_eq!(a.confidence, a.distribution[a.label]);
        }
    }
}
