//! Identifier assignment `h(d)` for both identifier families, and the inverse
//! mapping from generated identifiers back to documents.
//!
//! *N-gram identifiers* are document windows chosen by overlap with a query.
//! *Code identifiers* are residual-quantization code sequences over a hashed
//! document embedding, disambiguated to be one-to-one.

mod codebook;
mod index;
mod ngram;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use codebook::{
    assign_all_codes, assign_codes, embed_document, train_codebook, CodeSequence, Codebook,
    DEFAULT_N_CODES, DEFAULT_N_LEVELS,
};
pub use index::{build_identifier_index, Assignments, IdentifierIndex, NgramIndex, PrefixTrie};
pub use ngram::{extract_ngram_identifiers, IdentifierSet, NgramIdentifier, DEFAULT_M, DEFAULT_N};

use crate::error::{Error, Result};
use crate::util;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentifierKind {
    Ngram,
    Code,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IdentifierItems {
    Codes(Vec<u32>),
    Tokens(Vec<Vec<String>>),
}

/// One line of an identifiers file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifierRecord {
    pub doc_id: String,
    pub kind: IdentifierKind,
    pub items: IdentifierItems,
}

impl From<&IdentifierSet> for IdentifierRecord {
    fn from(set: &IdentifierSet) -> Self {
        Self {
            doc_id: set.doc_id.clone(),
            kind: IdentifierKind::Ngram,
            items: IdentifierItems::Tokens(
                set.identifiers.iter().map(|i| i.tokens.clone()).collect(),
            ),
        }
    }
}

impl From<&CodeSequence> for IdentifierRecord {
    fn from(seq: &CodeSequence) -> Self {
        Self {
            doc_id: seq.doc_id.clone(),
            kind: IdentifierKind::Code,
            items: IdentifierItems::Codes(seq.codes.clone()),
        }
    }
}

pub fn write_identifiers(path: &Path, records: &[IdentifierRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    util::write_atomic(path, out.as_bytes())
}

pub fn read_identifiers(path: &Path) -> Result<Vec<IdentifierRecord>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn write_codebook(path: &Path, codebook: &Codebook) -> Result<()> {
    util::write_atomic(path, serde_json::to_string(codebook)?.as_bytes())
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cb: Codebook = serde_json::from_str(&content)?;
    if cb.levels.len() != cb.n_levels
        || cb
            .levels
            .iter()
            .any(|l| l.len() != cb.n_codes || l.iter().any(|c| c.len() != cb.dim))
    {
        return Err(Error::Input(format!(
            "{}: codebook shape does not match its header",
            path.display()
        )));
    }
    if cb.levels.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Input(format!("{}: non-finite centroid", path.display())));
    }
    Ok(cb)
}
