use serde::Serialize;

use super::{Conversation, Taxonomy};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusStats {
    pub conversations: usize,
    pub sentences: usize,
    pub unlabeled: usize,
    /// One row per taxonomy tag, in taxonomy order.
    pub histogram: Vec<(String, usize)>,
    /// Share of labelled sentences whose tag is in the taxonomy's question set.
    pub question_fraction: f64,
}

pub fn corpus_stats(convs: &[Conversation], taxonomy: &Taxonomy) -> CorpusStats {
    let mut counts = vec![0usize; taxonomy.len()];
    let mut sentences = 0;
    let mut unlabeled = 0;
    for u in convs.iter().flat_map(|c| &c.utterances) {
        sentences += 1;
        match u.label {
            Some(l) if l < counts.len() => counts[l] += 1,
            _ => unlabeled += 1,
        }
    }
    let labeled = sentences - unlabeled;
    let questions: usize = counts
        .iter()
        .enumerate()
        .filter(|(i, _)| taxonomy.is_question(*i))
        .map(|(_, c)| c)
        .sum();
    CorpusStats {
        conversations: convs.len(),
        sentences,
        unlabeled,
        histogram: taxonomy.tags().map(str::to_owned).zip(counts).collect(),
        question_fraction: if labeled == 0 {
            0.0
        } else {
            questions as f64 / labeled as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_jsonl, synth_generate, SynthSpec};

    #[test]
    fn bundled_sample_covers_all_43_tags() {
        let tax = Taxonomy::swda();
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/swda_sample.jsonl");
        let convs = load_jsonl(&path, &tax).unwrap();
        let s = corpus_stats(&convs, &tax);
        assert_eq!(s.histogram.len(), 43);
        assert!(s.histogram.iter().all(|(_, c)| *c == 1));
        assert_eq!(s.sentences, 43);
    }

    #[test]
    fn single_utterance_corpus() {
        let tax = Taxonomy::swda();
        let conv = crate::corpus::parse_conversation(
            r#"{"id":"x","utterances":[{"speaker":"A","text":"Right?","act_tag":"tg"}]}"#,
            &tax,
        )
        .unwrap();
        let s = corpus_stats(&[conv], &tax);
        assert_eq!(s.histogram.iter().filter(|(_, c)| *c > 0).count(), 1);
        assert_eq!(s.question_fraction, 1.0);
    }

    #[test]
    fn question_heavy_synthetic_corpus() {
        let tax = Taxonomy::swda();
        let convs = synth_generate(&SynthSpec::separable(), &tax, 2).unwrap();
        let s = corpus_stats(&convs, &tax);
        // Counting oracle: yn + qw share computed directly from the labels.
        let q = ["yn", "qw"].map(|t| tax.id(t).unwrap());
        let direct = convs
            .iter()
            .flat_map(|c| &c.utterances)
            .filter(|u| q.contains(&u.label.unwrap()))
            .count() as f64
            / s.sentences as f64;
        assert_eq!(s.question_fraction, direct);
        assert!(s.question_fraction >= 0.25);
    }
}
