use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const N_SPECIALS: usize = 4;

const SPECIALS: [&str; N_SPECIALS] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Dense token ids: specials, then corpus tokens by (frequency desc, text),
/// then an optional block of code tokens `<c0>..<cN>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    n_codes: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    n_codes: usize,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        Vocab::from_tokens(r.tokens, r.n_codes)
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            tokens: v.tokens,
            n_codes: v.n_codes,
        }
    }
}

pub fn code_token_text(code: u32) -> String {
    format!("<c{code}>")
}

/// Builds the vocabulary over all document and query tokens; `code_tokens`
/// appends that many code tokens at the end.
pub fn build_vocab(corpus: &Corpus, code_tokens: Option<usize>) -> Vocab {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let docs = corpus.documents().iter().map(|d| &d.tokens);
    let queries = corpus.queries().iter().map(|q| &q.tokens);
    for tokens in docs.chain(queries) {
        for t in tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut by_freq: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, _)| !SPECIALS.contains(t))
        .collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let n_codes = code_tokens.unwrap_or(0);
    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend(by_freq.into_iter().map(|(t, _)| t.to_string()));
    tokens.extend((0..n_codes as u32).map(code_token_text));
    Vocab::from_tokens(tokens, n_codes)
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>, n_codes: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Self {
            tokens,
            index,
            n_codes,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Maps tokens to ids, unknown tokens to `UNK`.
    pub fn encode(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens
            .iter()
            .map(|t| self.id(t).unwrap_or(UNK))
            .collect()
    }

    /// Ids back to token text, stopping at `EOS`.
    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .map(|&i| self.token(i).unwrap_or("<unk>").to_string())
            .collect()
    }

    pub fn n_codes(&self) -> usize {
        self.n_codes
    }

    /// Id of code 0, when the vocabulary carries code tokens.
    pub fn code_offset(&self) -> Option<TokenId> {
        (self.n_codes > 0).then(|| (self.tokens.len() - self.n_codes) as TokenId)
    }

    pub fn code_id(&self, code: u32) -> Option<TokenId> {
        let offset = self.code_offset()?;
        ((code as usize) < self.n_codes).then_some(offset + code)
    }

    pub fn encode_codes(&self, codes: &[u32]) -> Option<Vec<TokenId>> {
        codes.iter().map(|&c| self.code_id(c)).collect()
    }

    /// Ids back to codes, stopping at `EOS`; `None` if a non-code token occurs.
    pub fn decode_codes(&self, ids: &[TokenId]) -> Option<Vec<u32>> {
        let offset = self.code_offset()?;
        ids.iter()
            .take_while(|&&i| i != EOS)
            .map(|&i| {
                (i >= offset && ((i - offset) as usize) < self.n_codes).then(|| i - offset)
            })
            .collect()
    }
}
