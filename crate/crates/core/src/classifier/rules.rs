//! Structural fallback for low-confidence predictions: a closed-class POS
//! lexicon and an ordered list of sentence-shape rules.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const POS_LEXICON_TSV: &str = include_str!("../../data/pos_lexicon.tsv");
pub const FALLBACK_RULES_TSV: &str = include_str!("../../data/fallback_rules.tsv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PosTag {
    Wh,
    Aux,
    Pron,
    Det,
    Prep,
    Conj,
    Intj,
    Adj,
    Adv,
    Verb,
    Num,
    Noun,
    Punct,
}

impl PosTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Wh => "WH",
            PosTag::Aux => "AUX",
            PosTag::Pron => "PRON",
            PosTag::Det => "DET",
            PosTag::Prep => "PREP",
            PosTag::Conj => "CONJ",
            PosTag::Intj => "INTJ",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Verb => "VERB",
            PosTag::Num => "NUM",
            PosTag::Noun => "NOUN",
            PosTag::Punct => "PUNCT",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "WH" => PosTag::Wh,
            "AUX" => PosTag::Aux,
            "PRON" => PosTag::Pron,
            "DET" => PosTag::Det,
            "PREP" => PosTag::Prep,
            "CONJ" => PosTag::Conj,
            "INTJ" => PosTag::Intj,
            "ADJ" => PosTag::Adj,
            "ADV" => PosTag::Adv,
            "VERB" => PosTag::Verb,
            "NUM" => PosTag::Num,
            "NOUN" => PosTag::Noun,
            "PUNCT" => PosTag::Punct,
            other => return Err(format!("unknown POS tag {other:?}")),
        })
    }
}

/// Output of the rule classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CoarseType {
    WhQuestion,
    YesnoQuestion,
    TagQuestion,
    Declarative,
    Other,
}

impl CoarseType {
    pub const ALL: [CoarseType; 5] = [
        CoarseType::WhQuestion,
        CoarseType::YesnoQuestion,
        CoarseType::TagQuestion,
        CoarseType::Declarative,
        CoarseType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CoarseType::WhQuestion => "WH_QUESTION",
            CoarseType::YesnoQuestion => "YESNO_QUESTION",
            CoarseType::TagQuestion => "TAG_QUESTION",
            CoarseType::Declarative => "DECLARATIVE",
            CoarseType::Other => "OTHER",
        }
    }
}

impl fmt::Display for CoarseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoarseType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        CoarseType::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown coarse type {s:?}"))
    }
}

/// Sentence-shape predicates available to rule files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RulePattern {
    /// Ends in `<tagword> ?`, either alone or after a comma.
    TagFragment,
    /// First tag is WH, possibly after leading interjections/punctuation.
    InitialWh,
    /// First tag is AUX and a PRON or NOUN follows somewhere.
    InitialAuxSubject,
    /// Last token is `?`.
    QuestionMark,
}

impl FromStr for RulePattern {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "tag_fragment" => RulePattern::TagFragment,
            "initial_wh" => RulePattern::InitialWh,
            "initial_aux_subject" => RulePattern::InitialAuxSubject,
            "question_mark" => RulePattern::QuestionMark,
            other => return Err(format!("unknown rule pattern {other:?}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PosLexicon {
    entries: HashMap<String, PosTag>,
}

impl PosLexicon {
    pub fn bundled() -> Self {
        Self::parse(POS_LEXICON_TSV, Path::new("<bundled pos_lexicon.tsv>")).expect("bundled lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (token, tag) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: "expected token<TAB>TAG".into(),
            })?;
            let tag: PosTag = tag.trim().parse().map_err(|msg| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg,
            })?;
            entries.entry(token.to_owned()).or_insert(tag);
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, token: &str) -> Option<PosTag> {
        self.entries.get(token).copied()
    }
}

/// Tags lowercased tokens; unknown tokens are NOUN and `? . ! ,` are PUNCT.
pub fn pos_tag(lexicon: &PosLexicon, tokens: &[String]) -> Vec<PosTag> {
    tokens
        .iter()
        .map(|t| match t.as_str() {
            "?" | "." | "!" | "," => PosTag::Punct,
            other => lexicon.lookup(other).unwrap_or(PosTag::Noun),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FallbackRuleSet {
    pub lexicon: PosLexicon,
    rules: Vec<(RulePattern, CoarseType)>,
    tag_words: Vec<String>,
}

impl FallbackRuleSet {
    pub fn bundled() -> Self {
        Self::parse(
            PosLexicon::bundled(),
            FALLBACK_RULES_TSV,
            Path::new("<bundled fallback_rules.tsv>"),
        )
        .expect("bundled rules parse")
    }

    pub fn load(lexicon: PosLexicon, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(lexicon, &text, path)
    }

    pub fn parse(lexicon: PosLexicon, text: &str, origin: &Path) -> Result<Self> {
        let mut rules = Vec::new();
        let mut tag_words = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (left, right) = line
                .split_once('\t')
                .ok_or_else(|| perr("expected two tab-separated fields".into()))?;
            if left == "@tagword" {
                tag_words.push(right.trim().to_owned());
                continue;
            }
            let pattern: RulePattern = left.parse().map_err(perr)?;
            let kind: CoarseType = right.trim().parse().map_err(perr)?;
            rules.push((pattern, kind));
        }
        Ok(Self {
            lexicon,
            rules,
            tag_words,
        })
    }

    pub fn rules(&self) -> &[(RulePattern, CoarseType)] {
        &self.rules
    }

    fn matches(&self, pattern: RulePattern, tokens: &[String], tags: &[PosTag]) -> bool {
        let ends_with_q = tokens.last().is_some_and(|t| t == "?");
        match pattern {
            RulePattern::TagFragment => {
                if !ends_with_q || tokens.len() < 2 {
                    return false;
                }
                let word = &tokens[tokens.len() - 2];
                if !self.tag_words.iter().any(|w| w == word) {
                    return false;
                }
                let before = &tokens[..tokens.len() - 2];
                before.is_empty() || before.last().is_some_and(|t| t == ",")
            }
            RulePattern::InitialWh => tags
                .iter()
                .find(|t| !matches!(t, PosTag::Intj | PosTag::Punct))
                .is_some_and(|t| *t == PosTag::Wh),
            RulePattern::InitialAuxSubject => {
                tags.first() == Some(&PosTag::Aux) && tags[1..].iter().any(|t| matches!(t, PosTag::Pron | PosTag::Noun))
            }
            RulePattern::QuestionMark => ends_with_q,
        }
    }
}

/// First matching rule's coarse type, DECLARATIVE when none match.
pub fn rule_classify(rules: &FallbackRuleSet, tokens: &[String], tags: &[PosTag]) -> CoarseType {
    debug_assert_eq!(tokens.len(), tags.len());
    rules
        .rules
        .iter()
        .find(|(p, _)| rules.matches(*p, tokens, tags))
        .map_or(CoarseType::Declarative, |(_, kind)| *kind)
}
