use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::CoarseType;
use crate::error::{Error, Result};

pub type LabelId = usize;

pub const SWDA_TAXONOMY_TSV: &str = include_str!("../../data/swda_taxonomy.tsv");
pub const NLTK_TAXONOMY_TSV: &str = include_str!("../../data/nltk_taxonomy.tsv");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    pub tag: String,
    pub name: String,
    pub example: String,
    pub count: u64,
}

/// Ordered dialogue-act label inventory. Label ids are positions in `entries`.
///
/// The TSV form is `tag<TAB>name<TAB>example<TAB>count`. Lines beginning with
/// `#@coarse` map a rule-classifier coarse type onto a tag; `#@questions`
/// lists the question-type tags as a comma-separated set. Other `#` lines
/// are comments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    entries: Vec<TaxonomyEntry>,
    coarse: Vec<(CoarseType, String)>,
    questions: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, LabelId>,
}

impl Taxonomy {
    pub fn swda() -> Self {
        Self::parse(SWDA_TAXONOMY_TSV, Path::new("<bundled swda_taxonomy.tsv>")).expect("bundled taxonomy parses")
    }

    pub fn nltk() -> Self {
        Self::parse(NLTK_TAXONOMY_TSV, Path::new("<bundled nltk_taxonomy.tsv>")).expect("bundled taxonomy parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut entries = Vec::new();
        let mut coarse = Vec::new();
        let mut questions = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#@coarse\t") {
                let (kind, tag) = rest
                    .split_once('\t')
                    .ok_or_else(|| perr(lineno, "expected #@coarse<TAB>TYPE<TAB>tag".into()))?;
                let kind: CoarseType = kind.parse().map_err(|e| perr(lineno, e))?;
                coarse.push((kind, tag.trim().to_owned()));
                continue;
            }
            if let Some(rest) = line.strip_prefix("#@questions\t") {
                questions = rest
                    .split(',')
                    .map(|s| s.trim().to_owned())
                    .filter(|s| !s.is_empty())
                    .collect();
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(perr(
                    lineno,
                    format!("expected 4 tab-separated fields, found {}", fields.len()),
                ));
            }
            let count = fields[3]
                .trim()
                .parse::<u64>()
                .map_err(|e| perr(lineno, format!("bad count {:?}: {e}", fields[3])))?;
            entries.push(TaxonomyEntry {
                tag: fields[0].to_owned(),
                name: fields[1].to_owned(),
                example: fields[2].to_owned(),
                count,
            });
        }
        Self::from_parts(entries, coarse, questions)
    }

    pub fn from_parts(
        entries: Vec<TaxonomyEntry>,
        coarse: Vec<(CoarseType, String)>,
        questions: Vec<String>,
    ) -> Result<Self> {
        let mut tax = Taxonomy {
            entries,
            coarse,
            questions,
            index: HashMap::new(),
        };
        tax.rebuild_index()?;
        for (_, tag) in &tax.coarse {
            tax.id(tag)?;
        }
        Ok(tax)
    }

    /// Taxonomy from bare tags, with no coarse mapping or question set.
    pub fn from_tags<S: AsRef<str>>(tags: &[S]) -> Result<Self> {
        let entries = tags
            .iter()
            .map(|t| TaxonomyEntry {
                tag: t.as_ref().to_owned(),
                name: t.as_ref().to_owned(),
                example: String::new(),
                count: 0,
            })
            .collect();
        Self::from_parts(entries, Vec::new(), Vec::new())
    }

    fn rebuild_index(&mut self) -> Result<()> {
        self.index.clear();
        for (i, e) in self.entries.iter().enumerate() {
            if self.index.insert(e.tag.clone(), i).is_some() {
                return Err(Error::Taxonomy(format!("duplicate tag {:?}", e.tag)));
            }
        }
        Ok(())
    }

    /// Restores the lookup table after deserialization.
    pub(crate) fn reindex(mut self) -> Result<Self> {
        self.rebuild_index()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TaxonomyEntry] {
        &self.entries
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.tag.as_str())
    }

    pub fn id(&self, tag: &str) -> Result<LabelId> {
        self.index
            .get(tag)
            .copied()
            .ok_or_else(|| Error::UnknownTag(tag.to_owned()))
    }

    pub fn tag(&self, id: LabelId) -> Result<&str> {
        self.entries.get(id).map(|e| e.tag.as_str()).ok_or(Error::Index {
            what: "taxonomy",
            index: id,
            size: self.entries.len(),
        })
    }

    /// Label for a rule-classifier coarse type, if this taxonomy maps it.
    pub fn coarse_label(&self, kind: CoarseType) -> Option<LabelId> {
        self.coarse
            .iter()
            .find(|(k, _)| *k == kind)
            .and_then(|(_, tag)| self.index.get(tag).copied())
    }

    pub fn set_coarse(&mut self, kind: CoarseType, tag: &str) -> Result<()> {
        self.id(tag)?;
        self.coarse.retain(|(k, _)| *k != kind);
        self.coarse.push((kind, tag.to_owned()));
        Ok(())
    }

    pub fn question_tags(&self) -> &[String] {
        &self.questions
    }

    pub fn set_question_tags(&mut self, tags: Vec<String>) {
        self.questions = tags;
    }

    pub fn is_question(&self, id: LabelId) -> bool {
        self.entries.get(id).is_some_and(|e| self.questions.contains(&e.tag))
    }

    /// Keeps only `tags` (in the given order); coarse mappings and question
    /// tags pointing outside the subset are dropped.
    pub fn restrict<S: AsRef<str>>(&self, tags: &[S]) -> Result<Self> {
        let mut entries = Vec::new();
        for t in tags {
            entries.push(self.entries[self.id(t.as_ref())?].clone());
        }
        let keep = |tag: &String| tags.iter().any(|t| t.as_ref() == tag);
        let coarse = self.coarse.iter().filter(|(_, t)| keep(t)).cloned().collect();
        let questions = self.questions.iter().filter(|t| keep(t)).cloned().collect();
        Self::from_parts(entries, coarse, questions)
    }
}
