use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Query};
use crate::error::{Error, Result};

pub const DEFAULT_M: usize = 10;
pub const DEFAULT_N: usize = 10;

/// A contiguous token window of a document.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NgramIdentifier {
    pub tokens: Vec<String>,
    pub source_doc: String,
    pub source_pos: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifierSet {
    pub doc_id: String,
    pub identifiers: Vec<NgramIdentifier>,
}

/// Picks the `m` length-`n` windows of `doc` that cover the most distinct
/// query tokens, ties going to the earlier window. A document shorter than
/// `n` yields itself as the single window.
pub fn extract_ngram_identifiers(
    doc: &Document,
    query: &Query,
    m: usize,
    n: usize,
) -> Result<IdentifierSet> {
    if doc.tokens.is_empty() {
        return Err(Error::Input(format!("document `{}` is empty", doc.id)));
    }
    if m == 0 || n == 0 {
        return Err(Error::Input("m and n must be positive".into()));
    }
    let query_tokens: HashSet<&str> = query.tokens.iter().map(String::as_str).collect();
    let width = n.min(doc.tokens.len());
    let n_windows = doc.tokens.len() - width + 1;

    let mut scored: Vec<(usize, usize)> = (0..n_windows)
        .map(|pos| {
            let window = &doc.tokens[pos..pos + width];
            let distinct: HashSet<&str> = window
                .iter()
                .map(String::as_str)
                .filter(|t| query_tokens.contains(t))
                .collect();
            (distinct.len(), pos)
        })
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let identifiers = scored
        .into_iter()
        .take(m)
        .map(|(_, pos)| NgramIdentifier {
            tokens: doc.tokens[pos..pos + width].to_vec(),
            source_doc: doc.id.clone(),
            source_pos: pos,
        })
        .collect();
    Ok(IdentifierSet {
        doc_id: doc.id.clone(),
        identifiers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(tokens: &[&str]) -> Document {
        Document {
            id: "d".into(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn query(tokens: &[&str]) -> Query {
        Query {
            id: "q".into(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn overlap_selection() {
        let d = doc(&["the", "cat", "sat", "on", "the", "mat"]);
        let set = extract_ngram_identifiers(&d, &query(&["cat", "on", "mat"]), 2, 3).unwrap();
        let picked: Vec<(usize, Vec<String>)> = set
            .identifiers
            .iter()
            .map(|i| (i.source_pos, i.tokens.clone()))
            .collect();
        assert_eq!(
            picked,
            vec![
                (1, vec!["cat".into(), "sat".into(), "on".into()]),
                (3, vec!["on".into(), "the".into(), "mat".into()]),
            ]
        );
    }

    #[test]
    fn zero_overlap_takes_earliest() {
        let d = doc(&["a", "b", "c", "d"]);
        let set = extract_ngram_identifiers(&d, &query(&["zzz"]), 1, 3).unwrap();
        assert_eq!(set.identifiers[0].source_pos, 0);
    }

    #[test]
    fn short_document_is_its_own_window() {
        let d = doc(&["a", "b"]);
        let set = extract_ngram_identifiers(&d, &query(&["a"]), 10, 10).unwrap();
        assert_eq!(set.identifiers.len(), 1);
        assert_eq!(set.identifiers[0].tokens, d.tokens);
    }

    #[test]
    fn distinct_count_not_frequency() {
        // window 0 repeats "x" three times, window 2 has x and y once each
        let d = doc(&["x", "x", "x", "y", "z"]);
        let set = extract_ngram_identifiers(&d, &query(&["x", "y"]), 1, 3).unwrap();
        assert_eq!(set.identifiers[0].source_pos, 1);
    }

    #[test]
    fn fewer_windows_than_m() {
        let d = doc(&["a", "b", "c", "d"]);
        let set = extract_ngram_identifiers(&d, &query(&["a"]), 10, 3).unwrap();
        assert_eq!(set.identifiers.len(), 2);
    }

    #[test]
    fn empty_document_rejected() {
        let d = doc(&[]);
        assert!(extract_ngram_identifiers(&d, &query(&["a"]), 1, 1).is_err());
    }
}
