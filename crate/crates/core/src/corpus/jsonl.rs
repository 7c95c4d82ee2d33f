use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{tokenize, Conversation, LabelId, Taxonomy, Utterance};
use crate::error::{Error, Result};
use crate::util::write_atomic;

#[derive(Serialize, Deserialize)]
struct UtteranceRecord {
    speaker: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    act_tag: Option<String>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct ConversationRecord {
    id: String,
    utterances: Vec<UtteranceRecord>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

/// Parses one JSONL line into a conversation.
pub fn parse_conversation(line: &str, taxonomy: &Taxonomy) -> std::result::Result<Conversation, String> {
    let record: ConversationRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let mut utterances = Vec::with_capacity(record.utterances.len());
    for (index, u) in record.utterances.into_iter().enumerate() {
        let label: Option<LabelId> = match &u.act_tag {
            Some(tag) => Some(taxonomy.id(tag).map_err(|e| e.to_string())?),
            None => None,
        };
        let tokens = tokenize(&u.text);
        if tokens.is_empty() {
            return Err(format!("utterance {index} of {:?} is empty", record.id));
        }
        utterances.push(Utterance {
            text: u.text,
            tokens,
            label,
            speaker: u.speaker,
            index,
            extra: u.extra,
        });
    }
    Ok(Conversation {
        id: record.id,
        utterances,
        extra: record.extra,
    })
}

pub fn load_jsonl(path: &Path, taxonomy: &Taxonomy) -> Result<Vec<Conversation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_conversation(&line, taxonomy) {
            Ok(c) => out.push(c),
            Err(msg) => {
                // Unknown tags get their own error kind.
                if let Some(tag) = unknown_tag(&line, taxonomy) {
                    return Err(Error::UnknownTag(tag));
                }
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg,
                });
            }
        }
    }
    Ok(out)
}

fn unknown_tag(line: &str, taxonomy: &Taxonomy) -> Option<String> {
    let record: ConversationRecord = serde_json::from_str(line).ok()?;
    record
        .utterances
        .into_iter()
        .filter_map(|u| u.act_tag)
        .find(|t| taxonomy.id(t).is_err())
}

pub fn conversation_to_json(conv: &Conversation, taxonomy: &Taxonomy) -> Result<String> {
    let utterances = conv
        .utterances
        .iter()
        .map(|u| {
            Ok(UtteranceRecord {
                speaker: u.speaker.clone(),
                text: u.text.clone(),
                act_tag: u.label.map(|l| taxonomy.tag(l).map(str::to_owned)).transpose()?,
                extra: u.extra.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let record = ConversationRecord {
        id: conv.id.clone(),
        utterances,
        extra: conv.extra.clone(),
    };
    Ok(serde_json::to_string(&record)?)
}

pub fn save_jsonl(convs: &[Conversation], taxonomy: &Taxonomy, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for c in convs {
        writeln!(buf, "{}", conversation_to_json(c, taxonomy)?).map_err(|e| Error::io(path, e))?;
    }
    write_atomic(path, &buf)
}
