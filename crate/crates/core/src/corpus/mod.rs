//! Conversations, the dialogue-act taxonomy, the JSONL corpus format, splits
//! and the synthetic generator.

mod jsonl;
mod split;
mod stats;
mod synth;
mod taxonomy;
mod tokenize;

use serde_json::{Map, Value};

pub use jsonl::{conversation_to_json, load_jsonl, parse_conversation, save_jsonl};
pub use split::{split_dataset, DatasetSplit, DEFAULT_RATIOS};
pub use stats::{corpus_stats, CorpusStats};
pub use synth::{context_free_bayes_accuracy, is_ambiguous, synth_generate, AmbiguousSpec, SynthSpec, AMBIGUOUS_KEY};
pub use taxonomy::{LabelId, Taxonomy, TaxonomyEntry};
pub use tokenize::tokenize;

pub const SWDA_SAMPLE_JSONL: &str = include_str!("../../data/swda_sample.jsonl");

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub text: String,
    pub tokens: Vec<String>,
    pub label: Option<LabelId>,
    pub speaker: String,
    pub index: usize,
    /// Fields not part of the canonical schema, kept for round-tripping.
    pub extra: Map<String, Value>,
}

impl Utterance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conversation {
    pub id: String,
    pub utterances: Vec<Utterance>,
    pub extra: Map<String, Value>,
}

impl Conversation {
    /// Unlabelled conversation from raw utterance texts (speakers alternate).
    pub fn from_texts<S: AsRef<str>>(id: &str, texts: &[S]) -> Self {
        let utterances = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Utterance {
                text: t.as_ref().to_owned(),
                tokens: tokenize(t.as_ref()),
                label: None,
                speaker: if i % 2 == 0 { "A" } else { "B" }.to_owned(),
                index: i,
                extra: Map::new(),
            })
            .collect();
        Conversation {
            id: id.to_owned(),
            utterances,
            extra: Map::new(),
        }
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.utterances.iter().all(|u| u.label.is_some())
    }
}

/// Restricts `taxonomy` to the tags used in `convs` (keeping taxonomy order)
/// and rewrites every label id to the smaller inventory.
pub fn compact_taxonomy(convs: &mut [Conversation], taxonomy: &Taxonomy) -> crate::Result<Taxonomy> {
    let mut used = vec![false; taxonomy.len()];
    for u in convs.iter().flat_map(|c| &c.utterances) {
        if let Some(l) = u.label {
            taxonomy.tag(l)?;
            used[l] = true;
        }
    }
    let tags: Vec<&str> = taxonomy.tags().zip(&used).filter(|(_, &u)| u).map(|(t, _)| t).collect();
    let compact = taxonomy.restrict(&tags)?;
    for u in convs.iter_mut().flat_map(|c| &mut c.utterances) {
        if let Some(l) = u.label {
            u.label = Some(compact.id(taxonomy.tag(l)?)?);
        }
    }
    Ok(compact)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compaction_keeps_tags_attached_to_utterances() {
        let full = Taxonomy::swda();
        let mut convs = vec![Conversation::from_texts("c", &["a", "b", "c"])];
        let tags = ["qw", "st", "qw"];
        for (u, t) in convs[0].utterances.iter_mut().zip(tags) {
            u.label = Some(full.id(t).unwrap());
        }
        let small = compact_taxonomy(&mut convs, &full).unwrap();
        assert_eq!(small.tags().collect::<Vec<_>>(), ["st", "qw"]);
        let got: Vec<&str> = convs[0]
            .utterances
            .iter()
            .map(|u| small.tag(u.label.unwrap()).unwrap())
            .collect();
        assert_eq!(got, tags);
    }
}
