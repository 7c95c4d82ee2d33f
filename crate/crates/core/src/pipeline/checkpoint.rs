//! Binary model container.
//!
//! ```text
//! "DACT" | version u16 LE | header length u32 LE | JSON header
//!        | parameter values, f64 LE, header order | SHA-256 of everything before
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, ModelConfig, RuleSource};
use crate::corpus::Taxonomy;
use crate::encoder_lm::TokenVocab;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamStore};
use crate::util::write_atomic;

pub const MAGIC: &[u8; 4] = b"DACT";
pub const VERSION: u16 = 1;
const HASH_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    taxonomy: Taxonomy,
    vocab: Vec<String>,
    rules: RuleSource,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

pub fn checkpoint_bytes(model: &Model) -> Result<Vec<u8>> {
    let header = Header {
        config: model.config.clone(),
        taxonomy: model.taxonomy.clone(),
        vocab: model.vocab.user_tokens().to_vec(),
        rules: model.rule_source().clone(),
        params: model
            .params
            .iter()
            .map(|(name, p)| ParamEntry {
                name: name.to_owned(),
                rows: p.value.rows(),
                cols: p.value.cols(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(header.len()).map_err(|_| Error::Format("header larger than 4 GiB".into()))?;
    let mut out = Vec::with_capacity(10 + header.len() + 8 * model.params.num_values() + HASH_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    for (_, p) in model.params.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Hex SHA-256 over the serialized model (the checkpoint's trailing hash).
pub fn checkpoint_hash(model: &Model) -> Result<String> {
    let bytes = checkpoint_bytes(model)?;
    Ok(hex(&bytes[bytes.len() - HASH_LEN..]))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<String> {
    let bytes = checkpoint_bytes(model)?;
    write_atomic(path, &bytes)?;
    Ok(hex(&bytes[bytes.len() - HASH_LEN..]))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

/// Loads and insists the checkpoint was trained on `taxonomy`'s label set.
pub fn load_checkpoint_for(path: &Path, taxonomy: &Taxonomy) -> Result<Model> {
    let model = load_checkpoint(path)?;
    if !model.taxonomy.tags().eq(taxonomy.tags()) {
        return Err(Error::TaxonomyMismatch);
    }
    Ok(model)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 10 + HASH_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let (body, digest) = bytes.split_at(bytes.len() - HASH_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::HashMismatch);
    }
    let header_len = u32::from_le_bytes([body[6], body[7], body[8], body[9]]) as usize;
    let header_end = 10usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| Error::Format("header length exceeds file".into()))?;
    let header: Header =
        serde_json::from_slice(&body[10..header_end]).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let mut payload = &body[header_end..];
    let mut params = ParamStore::new();
    for entry in &header.params {
        let count = entry.rows * entry.cols;
        if payload.len() < 8 * count {
            return Err(Error::Format(format!("payload truncated at {}", entry.name)));
        }
        let (chunk, rest) = payload.split_at(8 * count);
        let values = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        params.insert(entry.name.clone(), Matrix::from_vec(entry.rows, entry.cols, values)?);
        payload = rest;
    }
    if !payload.is_empty() {
        return Err(Error::Format(format!("{} trailing payload bytes", payload.len())));
    }
    let taxonomy = header.taxonomy.reindex()?;
    let mut vocab = TokenVocab::new();
    for t in &header.vocab {
        vocab.add(t);
    }
    Model::assemble(header.config, taxonomy, vocab, params, header.rules)
}
