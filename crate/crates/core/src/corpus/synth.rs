//! Template-driven synthetic conversation generator.
//!
//! Labels follow a first-order transition table; each utterance fills a
//! template of its label from named slot lists. In context-ambiguous mode a
//! balanced pool of (context label, surface) pairs is inserted as two-turn
//! exchanges: a templated context utterance followed by a surface string that
//! is identical across contexts but labelled by the context.

use std::collections::BTreeMap;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{tokenize, Conversation, Taxonomy, Utterance};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Marker placed in `Utterance::extra` on context-ambiguous responses.
pub const AMBIGUOUS_KEY: &str = "synth_ambiguous";

pub const SEPARABLE_SPEC_JSON: &str = include_str!("../../data/synth_separable.json");
pub const AMBIGUOUS_SPEC_JSON: &str = include_str!("../../data/synth_ambiguous.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguousSpec {
    pub surfaces: Vec<String>,
    /// Context label → label of the ambiguous response that follows it.
    pub resolve: BTreeMap<String, String>,
    pub exchanges_per_conversation: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default)]
    pub name: String,
    pub conversations: usize,
    /// Inclusive `[min, max]` utterances per conversation.
    pub utterances_per_conversation: [usize; 2],
    #[serde(default)]
    pub slots: IndexMap<String, Vec<String>>,
    pub templates: IndexMap<String, Vec<String>>,
    /// `"START"` gives the opening distribution; other keys are labels.
    pub transitions: IndexMap<String, IndexMap<String, f64>>,
    #[serde(default)]
    pub ambiguous: Option<AmbiguousSpec>,
}

impl SynthSpec {
    pub fn separable() -> Self {
        serde_json::from_str(SEPARABLE_SPEC_JSON).expect("bundled spec parses")
    }

    pub fn ambiguous() -> Self {
        serde_json::from_str(AMBIGUOUS_SPEC_JSON).expect("bundled spec parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    /// Tags the spec can emit, in first-mention order.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |t: &str| {
            if !out.iter().any(|o| o == t) {
                out.push(t.to_owned());
            }
        };
        self.templates.keys().for_each(|t| push(t));
        if let Some(a) = &self.ambiguous {
            a.resolve.values().for_each(|t| push(t));
        }
        out
    }

    fn validate(&self, taxonomy: &Taxonomy) -> Result<()> {
        let [lo, hi] = self.utterances_per_conversation;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("bad utterances_per_conversation [{lo}, {hi}]")));
        }
        for (label, templates) in &self.templates {
            taxonomy.id(label)?;
            if templates.is_empty() {
                return Err(Error::Config(format!("label {label:?} has no templates")));
            }
            for t in templates {
                for slot in slot_names(t) {
                    if !self.slots.contains_key(slot) {
                        return Err(Error::Config(format!("template {t:?} uses unknown slot {{{slot}}}")));
                    }
                }
            }
        }
        for (from, row) in &self.transitions {
            if from != "START" && !self.templates.contains_key(from) {
                taxonomy.id(from)?;
            }
            for to in row.keys() {
                taxonomy.id(to)?;
                if !self.templates.contains_key(to) {
                    return Err(Error::Config(format!("transition target {to:?} has no templates")));
                }
            }
        }
        if !self.transitions.contains_key("START") {
            return Err(Error::Config("transitions need a START row".into()));
        }
        if let Some(a) = &self.ambiguous {
            if a.surfaces.is_empty() || a.resolve.is_empty() {
                return Err(Error::Config("ambiguous block needs surfaces and resolve".into()));
            }
            for (ctx, resp) in &a.resolve {
                taxonomy.id(ctx)?;
                taxonomy.id(resp)?;
                if !self.templates.contains_key(ctx) {
                    return Err(Error::Config(format!("context label {ctx:?} has no templates")));
                }
            }
            if 2 * a.exchanges_per_conversation > lo {
                return Err(Error::Config(
                    "ambiguous exchanges do not fit the minimum conversation length".into(),
                ));
            }
        }
        Ok(())
    }
}

fn slot_names(template: &str) -> impl Iterator<Item = &str> {
    template
        .split('{')
        .skip(1)
        .filter_map(|s| s.split_once('}').map(|(n, _)| n))
}

fn fill(template: &str, slots: &IndexMap<String, Vec<String>>, rng: &mut SeededRng) -> String {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').expect("validated template");
        let choices = &slots[&after[..close]];
        out.push_str(rng.choose(choices).map_or("", String::as_str));
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    out
}

fn utterance(text: String, label: usize, index: usize) -> Utterance {
    Utterance {
        tokens: tokenize(&text),
        text,
        label: Some(label),
        speaker: if index.is_multiple_of(2) { "A" } else { "B" }.to_owned(),
        index,
        extra: Map::new(),
    }
}

/// Generates `spec.conversations` labelled conversations; same seed, same corpus.
pub fn synth_generate(spec: &SynthSpec, taxonomy: &Taxonomy, seed: u64) -> Result<Vec<Conversation>> {
    spec.validate(taxonomy)?;
    let mut rng = SeededRng::new(seed);

    // Balanced (context, surface) pool so no surface leans towards either response label.
    let mut pool: Vec<(String, String)> = Vec::new();
    if let Some(a) = &spec.ambiguous {
        let combos: Vec<(String, String)> = a
            .resolve
            .keys()
            .flat_map(|k| a.surfaces.iter().map(move |s| (k.clone(), s.clone())))
            .collect();
        let needed = spec.conversations * a.exchanges_per_conversation;
        pool = combos.iter().cycle().take(needed).cloned().collect();
        rng.shuffle(&mut pool);
    }
    let mut pool = pool.into_iter();

    let [lo, hi] = spec.utterances_per_conversation;
    let mut convs = Vec::with_capacity(spec.conversations);
    for c in 0..spec.conversations {
        let len = lo + rng.below(hi - lo + 1);
        let exchanges = spec.ambiguous.as_ref().map_or(0, |a| a.exchanges_per_conversation);
        let chain_len = len - 2 * exchanges;

        // Plain utterances from the transition chain.
        let mut chain: Vec<(String, String)> = Vec::with_capacity(chain_len);
        let mut prev = "START".to_owned();
        for _ in 0..chain_len {
            let row = spec.transitions.get(&prev).unwrap_or(&spec.transitions["START"]);
            let weights: Vec<f64> = row.values().copied().collect();
            let pick = rng
                .weighted_index(&weights)
                .ok_or_else(|| Error::Config(format!("transition row {prev:?} has no mass")))?;
            let label = row.get_index(pick).expect("index in range").0.clone();
            let text = fill(
                rng.choose(&spec.templates[&label]).expect("non-empty"),
                &spec.slots,
                &mut rng,
            );
            chain.push((label.clone(), text));
            prev = label;
        }

        // Insert exchanges at random gaps of the chain.
        let mut blocks: Vec<Vec<(String, String, bool)>> =
            chain.into_iter().map(|(l, t)| vec![(l, t, false)]).collect();
        if let Some(a) = &spec.ambiguous {
            for _ in 0..exchanges {
                let (ctx, surface) = pool.next().expect("pool sized for every exchange");
                let ctx_text = fill(
                    rng.choose(&spec.templates[&ctx]).expect("non-empty"),
                    &spec.slots,
                    &mut rng,
                );
                let resp = a.resolve[&ctx].clone();
                let at = rng.below(blocks.len() + 1);
                blocks.insert(at, vec![(ctx, ctx_text, false), (resp, surface, true)]);
            }
        }

        let utterances = blocks
            .into_iter()
            .flatten()
            .enumerate()
            .map(|(i, (label, text, ambiguous))| -> Result<Utterance> {
                let mut u = utterance(text, taxonomy.id(&label)?, i);
                if ambiguous {
                    u.extra.insert(AMBIGUOUS_KEY.into(), Value::Bool(true));
                }
                Ok(u)
            })
            .collect::<Result<Vec<_>>>()?;
        convs.push(Conversation {
            id: format!("{}-{c:05}", if spec.name.is_empty() { "synth" } else { &spec.name }),
            utterances,
            extra: Map::new(),
        });
    }
    Ok(convs)
}

pub fn is_ambiguous(u: &Utterance) -> bool {
    u.extra.get(AMBIGUOUS_KEY) == Some(&Value::Bool(true))
}

/// Accuracy of the best classifier that sees only the utterance text, on the
/// ambiguous subset: per surface string, the majority label count.
pub fn context_free_bayes_accuracy(convs: &[Conversation]) -> Option<f64> {
    let mut per_surface: BTreeMap<&str, BTreeMap<usize, usize>> = BTreeMap::new();
    let mut total = 0;
    for u in convs.iter().flat_map(|c| &c.utterances).filter(|u| is_ambiguous(u)) {
        if let Some(l) = u.label {
            *per_surface.entry(&u.text).or_default().entry(l).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return None;
    }
    let best: usize = per_surface
        .values()
        .map(|m| m.values().copied().max().unwrap_or(0))
        .sum();
    Some(best as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn separable_corpus_is_closed_world_and_deterministic() {
        let tax = Taxonomy::swda();
        let spec = SynthSpec::separable();
        let convs = synth_generate(&spec, &tax, 11).unwrap();
        let labels: BTreeSet<usize> = spec.labels().iter().map(|t| tax.id(t).unwrap()).collect();
        assert_eq!(labels.len(), 5);
        let n: usize = convs.iter().map(|c| c.utterances.len()).sum();
        assert_eq!(n, 2400);
        for u in convs.iter().flat_map(|c| &c.utterances) {
            assert!(labels.contains(&u.label.unwrap()));
        }
        assert_eq!(convs, synth_generate(&spec, &tax, 11).unwrap());
        assert_ne!(convs, synth_generate(&spec, &tax, 12).unwrap());
    }

    #[test]
    fn ambiguous_mode_is_balanced() {
        let tax = Taxonomy::swda();
        let spec = SynthSpec::ambiguous();
        let convs = synth_generate(&spec, &tax, 3).unwrap();
        let amb: Vec<&Utterance> = convs
            .iter()
            .flat_map(|c| &c.utterances)
            .filter(|u| is_ambiguous(u))
            .collect();
        assert!(!amb.is_empty());
        let ya = tax.id("ya").unwrap();
        let share = amb.iter().filter(|u| u.label == Some(ya)).count() as f64 / amb.len() as f64;
        assert!((share - 0.5).abs() <= 0.02, "share {share}");
        assert!(context_free_bayes_accuracy(&convs).unwrap() <= 0.5 + 0.02);

        // The response label is fixed by the preceding context label.
        let yn = tax.id("yn").unwrap();
        for c in &convs {
            for w in c.utterances.windows(2) {
                if is_ambiguous(&w[1]) {
                    let want = if w[0].label == Some(yn) { "ya" } else { "aa" };
                    assert_eq!(w[1].label, Some(tax.id(want).unwrap()));
                }
            }
        }
    }

    #[test]
    fn unknown_label_is_a_taxonomy_error() {
        let tax = Taxonomy::swda();
        let mut spec = SynthSpec::separable();
        spec.templates.insert("zz".into(), vec!["hello".into()]);
        assert!(matches!(synth_generate(&spec, &tax, 1), Err(Error::UnknownTag(_))));
    }

    #[test]
    fn unknown_slot_is_rejected() {
        let tax = Taxonomy::swda();
        let mut spec = SynthSpec::separable();
        spec.templates.insert("st".into(), vec!["{nope} hi".into()]);
        assert!(matches!(synth_generate(&spec, &tax, 1), Err(Error::Config(_))));
    }
}
