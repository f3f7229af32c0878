use std::collections::HashMap;

use crate::corpus::Corpus;
use crate::identifier::CodeSequence;

/// Maps every length-`n` window of the corpus (and every whole document
/// shorter than `n`) to the documents containing it.
#[derive(Clone, Debug)]
pub struct NgramIndex {
    n: usize,
    windows: HashMap<Vec<String>, Vec<usize>>,
    docs: Vec<Vec<String>>,
}

impl NgramIndex {
    pub fn build(corpus: &Corpus, n: usize) -> Self {
        let mut windows: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
        for (di, doc) in corpus.documents().iter().enumerate() {
            let width = n.min(doc.tokens.len());
            for w in doc.tokens.windows(width) {
                let entry = windows.entry(w.to_vec()).or_default();
                if entry.last() != Some(&di) {
                    entry.push(di);
                }
            }
        }
        Self {
            n,
            windows,
            docs: corpus
                .documents()
                .iter()
                .map(|d| d.tokens.clone())
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Positions of documents containing `gram` contiguously, ascending.
    pub fn lookup(&self, gram: &[String]) -> Vec<usize> {
        if gram.is_empty() {
            return Vec::new();
        }
        if let Some(docs) = self.windows.get(gram) {
            if gram.len() == self.n {
                return docs.clone();
            }
        }
        if gram.len() == self.n {
            return Vec::new();
        }
        // Off-length grams fall back to a scan.
        self.docs
            .iter()
            .enumerate()
            .filter(|(_, tokens)| tokens.windows(gram.len()).any(|w| w == gram))
            .map(|(i, _)| i)
            .collect()
    }

    /// Every indexed window, in no particular order.
    pub fn windows(&self) -> impl Iterator<Item = (&[String], &[usize])> {
        self.windows
            .iter()
            .map(|(k, v)| (k.as_slice(), v.as_slice()))
    }
}

#[derive(Clone, Debug, Default)]
struct TrieNode {
    children: Vec<(u32, usize)>,
    docs: Vec<usize>,
}

/// Prefix trie over `u32` symbol sequences whose terminal nodes carry
/// document positions.
#[derive(Clone, Debug)]
pub struct PrefixTrie {
    nodes: Vec<TrieNode>,
}

impl Default for PrefixTrie {
    fn default() -> Self {
        Self::new()
    }
}

impl PrefixTrie {
    pub const ROOT: usize = 0;

    pub fn new() -> Self {
        Self {
            nodes: vec![TrieNode::default()],
        }
    }

    pub fn insert(&mut self, seq: &[u32], doc: usize) {
        let mut node = Self::ROOT;
        for &sym in seq {
            node = match self.child(node, sym) {
                Some(next) => next,
                None => {
                    let next = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    let children = &mut self.nodes[node].children;
                    let at = children.partition_point(|&(s, _)| s < sym);
                    children.insert(at, (sym, next));
                    next
                }
            };
        }
        let docs = &mut self.nodes[node].docs;
        if let Err(at) = docs.binary_search(&doc) {
            docs.insert(at, doc);
        }
    }

    pub fn child(&self, node: usize, sym: u32) -> Option<usize> {
        let children = &self.nodes[node].children;
        children
            .binary_search_by_key(&sym, |&(s, _)| s)
            .ok()
            .map(|i| children[i].1)
    }

    /// Children of `node`, ascending by symbol.
    pub fn children(&self, node: usize) -> &[(u32, usize)] {
        &self.nodes[node].children
    }

    pub fn is_terminal(&self, node: usize) -> bool {
        !self.nodes[node].docs.is_empty()
    }

    pub fn docs_at(&self, node: usize) -> &[usize] {
        &self.nodes[node].docs
    }

    pub fn walk(&self, seq: &[u32]) -> Option<usize> {
        seq.iter()
            .try_fold(Self::ROOT, |node, &sym| self.child(node, sym))
    }

    /// Documents whose full sequence is `seq`.
    pub fn lookup(&self, seq: &[u32]) -> &[usize] {
        self.walk(seq).map(|n| self.docs_at(n)).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1 && self.nodes[0].docs.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn terminal_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.docs.is_empty()).count()
    }
}

/// Inverse of identifier assignment: identifier -> documents.
#[derive(Clone, Debug)]
pub enum IdentifierIndex {
    Ngram(NgramIndex),
    Code(PrefixTrie),
}

/// What identifiers a corpus was assigned.
#[derive(Clone, Debug)]
pub enum Assignments {
    /// Query-dependent n-gram sets: `m` windows of `n` tokens per (doc, query).
    Ngram { m: usize, n: usize },
    /// One code sequence per document.
    Code(Vec<CodeSequence>),
}

impl Assignments {
    /// Code sequences keyed by document position, when in code mode.
    pub fn codes_by_position(&self, corpus: &Corpus) -> Option<Vec<Option<Vec<u32>>>> {
        match self {
            Assignments::Ngram { .. } => None,
            Assignments::Code(seqs) => {
                let mut out = vec![None; corpus.len()];
                for s in seqs {
                    if let Some(i) = corpus.doc_position(&s.doc_id) {
                        out[i] = Some(s.codes.clone());
                    }
                }
                Some(out)
            }
        }
    }
}

pub fn build_identifier_index(assignments: &Assignments, corpus: &Corpus) -> IdentifierIndex {
    match assignments {
        Assignments::Ngram { n, .. } => IdentifierIndex::Ngram(NgramIndex::build(corpus, *n)),
        Assignments::Code(seqs) => {
            let mut trie = PrefixTrie::new();
            for s in seqs {
                if let Some(i) = corpus.doc_position(&s.doc_id) {
                    trie.insert(&s.codes, i);
                }
            }
            IdentifierIndex::Code(trie)
        }
    }
}
