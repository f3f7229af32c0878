//! Corpus data model, seeded synthetic corpora and file ingestion.
//!
//! On disk a corpus is three files: documents and queries as JSON lines
//! (`{"id": ..., "text": ...}`) and judgments as `query_id<TAB>doc_id<TAB>rel`.
//! Text is lowercased and split on whitespace.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::util;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub query_id: String,
    pub doc_id: String,
    pub relevance: u8,
}

/// Documents, queries and binary relevance judgments with validated
/// referential integrity.
#[derive(Clone, Debug)]
pub struct Corpus {
    documents: Vec<Document>,
    queries: Vec<Query>,
    judgments: Vec<Judgment>,
    doc_index: HashMap<String, usize>,
    query_index: HashMap<String, usize>,
    // query id -> positive document positions, ordered by doc id
    positives: HashMap<String, Vec<usize>>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.documents == other.documents
            && self.queries == other.queries
            && self.judgments == other.judgments
    }
}

impl Corpus {
    pub fn new(
        documents: Vec<Document>,
        queries: Vec<Query>,
        judgments: Vec<Judgment>,
    ) -> Result<Self> {
        let mut doc_index = HashMap::with_capacity(documents.len());
        for (i, d) in documents.iter().enumerate() {
            if d.tokens.is_empty() {
                return Err(Error::Input(format!("document `{}` has no tokens", d.id)));
            }
            if doc_index.insert(d.id.clone(), i).is_some() {
                return Err(Error::Input(format!("duplicate document id `{}`", d.id)));
            }
        }
        let mut query_index = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            if q.tokens.is_empty() {
                return Err(Error::Input(format!("query `{}` has no tokens", q.id)));
            }
            if query_index.insert(q.id.clone(), i).is_some() {
                return Err(Error::Input(format!("duplicate query id `{}`", q.id)));
            }
        }
        let mut positives: HashMap<String, Vec<usize>> = HashMap::new();
        for j in &judgments {
            if !query_index.contains_key(&j.query_id) {
                return Err(Error::DanglingReference {
                    kind: "query",
                    id: j.query_id.clone(),
                });
            }
            let Some(&di) = doc_index.get(&j.doc_id) else {
                return Err(Error::DanglingReference {
                    kind: "document",
                    id: j.doc_id.clone(),
                });
            };
            if j.relevance > 1 {
                return Err(Error::Input(format!(
                    "relevance {} for ({}, {}) is not binary",
                    j.relevance, j.query_id, j.doc_id
                )));
            }
            if j.relevance == 1 {
                positives.entry(j.query_id.clone()).or_default().push(di);
            }
        }
        for list in positives.values_mut() {
            list.sort_by(|&a, &b| documents[a].id.cmp(&documents[b].id));
            list.dedup();
        }
        Ok(Self {
            documents,
            queries,
            judgments,
            doc_index,
            query_index,
            positives,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn judgments(&self) -> &[Judgment] {
        &self.judgments
    }

    /// Number of documents.
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn doc_position(&self, id: &str) -> Option<usize> {
        self.doc_index.get(id).copied()
    }

    pub fn doc(&self, id: &str) -> Option<&Document> {
        self.doc_position(id).map(|i| &self.documents[i])
    }

    pub fn query(&self, id: &str) -> Option<&Query> {
        self.query_index.get(id).map(|&i| &self.queries[i])
    }

    /// Positions of the documents judged relevant to `query_id`, in doc-id
    /// order.
    pub fn positives(&self, query_id: &str) -> &[usize] {
        self.positives
            .get(query_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn relevant_ids(&self, query_id: &str) -> HashSet<&str> {
        self.positives(query_id)
            .iter()
            .map(|&i| self.documents[i].id.as_str())
            .collect()
    }

    /// SHA-256 over the canonical on-disk serialization.
    pub fn fingerprint(&self) -> String {
        let (docs, queries, qrels) = self.serialize_files();
        let mut h = Sha256::new();
        h.update(docs.as_bytes());
        h.update([0u8]);
        h.update(queries.as_bytes());
        h.update([0u8]);
        h.update(qrels.as_bytes());
        hex::encode(h.finalize())
    }

    fn serialize_files(&self) -> (String, String, String) {
        #[derive(Serialize)]
        struct Line<'a> {
            id: &'a str,
            text: String,
        }
        let to_lines = |items: &mut dyn Iterator<Item = (&str, &[String])>| {
            let mut out = String::new();
            for (id, tokens) in items {
                let line = Line {
                    id,
                    text: tokens.join(" "),
                };
                out.push_str(&serde_json::to_string(&line).expect("string fields serialize"));
                out.push('\n');
            }
            out
        };
        let docs = to_lines(
            &mut self
                .documents
                .iter()
                .map(|d| (d.id.as_str(), d.tokens.as_slice())),
        );
        let queries = to_lines(
            &mut self
                .queries
                .iter()
                .map(|q| (q.id.as_str(), q.tokens.as_slice())),
        );
        let mut qrels = String::new();
        for j in &self.judgments {
            let _ = writeln!(qrels, "{}\t{}\t{}", j.query_id, j.doc_id, j.relevance);
        }
        (docs, queries, qrels)
    }

    /// Writes `documents.jsonl`, `queries.jsonl` and `qrels.tsv` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        let (docs, queries, qrels) = self.serialize_files();
        util::write_atomic(&dir.join("documents.jsonl"), docs.as_bytes())?;
        util::write_atomic(&dir.join("queries.jsonl"), queries.as_bytes())?;
        util::write_atomic(&dir.join("qrels.tsv"), qrels.as_bytes())
    }
}

/// Parameters of the synthetic topic corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_topics: usize,
    pub docs_per_topic: usize,
    pub doc_len: usize,
    pub topic_vocab: usize,
    pub shared_vocab: usize,
    pub query_len: usize,
    pub queries_per_doc: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_topics: 4,
            docs_per_topic: 250,
            doc_len: 24,
            topic_vocab: 200,
            shared_vocab: 100,
            query_len: 4,
            queries_per_doc: 2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_topics", self.n_topics),
            ("docs_per_topic", self.docs_per_topic),
            ("doc_len", self.doc_len),
            ("topic_vocab", self.topic_vocab),
            ("shared_vocab", self.shared_vocab),
            ("query_len", self.query_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.query_len > self.doc_len {
            return Err(Error::Config(format!(
                "query_len {} exceeds doc_len {}",
                self.query_len, self.doc_len
            )));
        }
        if self.topic_vocab < self.query_len {
            return Err(Error::Config(format!(
                "topic_vocab {} is smaller than query_len {}",
                self.topic_vocab, self.query_len
            )));
        }
        Ok(())
    }
}

pub const TOPIC_FRACTION: f64 = 0.7;

/// Generates a topic corpus: every topic owns a disjoint vocabulary, each
/// document mixes 70% topic tokens with 30% tokens from a shared vocabulary,
/// and every query is a set of distinct tokens drawn from one source document
/// (topic tokens first), judged relevant to that document only.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let mut rng = util::rng(config.seed);
    let n_docs = config.n_topics * config.docs_per_topic;
    let n_queries = n_docs * config.queries_per_doc;
    let dw = digits(n_docs);
    let qw = digits(n_queries.max(1));

    let n_topic_tokens = ((TOPIC_FRACTION * config.doc_len as f64).round() as usize)
        .clamp(1, config.doc_len);

    let mut documents = Vec::with_capacity(n_docs);
    let mut queries = Vec::with_capacity(n_queries);
    let mut judgments = Vec::with_capacity(n_queries);

    for topic in 0..config.n_topics {
        for _ in 0..config.docs_per_topic {
            let mut picks: Vec<(bool, usize)> = Vec::with_capacity(config.doc_len);
            for _ in 0..n_topic_tokens {
                picks.push((true, rng.random_range(0..config.topic_vocab)));
            }
            for _ in n_topic_tokens..config.doc_len {
                picks.push((false, rng.random_range(0..config.shared_vocab)));
            }
            picks.shuffle(&mut rng);
            let tokens: Vec<String> = picks
                .iter()
                .map(|&(is_topic, w)| {
                    if is_topic {
                        topic_token(topic, w)
                    } else {
                        shared_token(w)
                    }
                })
                .collect();

            let doc_id = format!("d{:0dw$}", documents.len());
            for _ in 0..config.queries_per_doc {
                let q_tokens = sample_query(&picks, topic, config.query_len, &mut rng);
                let query_id = format!("q{:0qw$}", queries.len());
                judgments.push(Judgment {
                    query_id: query_id.clone(),
                    doc_id: doc_id.clone(),
                    relevance: 1,
                });
                queries.push(Query {
                    id: query_id,
                    tokens: q_tokens,
                });
            }
            documents.push(Document { id: doc_id, tokens });
        }
    }
    Corpus::new(documents, queries, judgments)
}

fn sample_query<R: Rng>(
    picks: &[(bool, usize)],
    topic: usize,
    query_len: usize,
    rng: &mut R,
) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut topical = Vec::new();
    let mut shared = Vec::new();
    for &(is_topic, w) in picks {
        if seen.insert((is_topic, w)) {
            if is_topic {
                topical.push(w);
            } else {
                shared.push(w);
            }
        }
    }
    topical.shuffle(rng);
    shared.shuffle(rng);
    let mut out: Vec<String> = topical
        .into_iter()
        .take(query_len)
        .map(|w| topic_token(topic, w))
        .collect();
    let missing = query_len - out.len();
    out.extend(shared.into_iter().take(missing).map(shared_token));
    out
}

fn topic_token(topic: usize, w: usize) -> String {
    format!("t{topic}w{w}")
}

fn shared_token(w: usize) -> String {
    format!("s{w}")
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}

/// Lowercases and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Deserialize)]
struct TextLine {
    id: String,
    text: String,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_text_lines(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    let content = read_to_string(path)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in content.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let parsed: TextLine = serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
        let tokens = tokenize(&parsed.text);
        if tokens.is_empty() {
            return Err(malformed(format!("empty text for id `{}`", parsed.id)));
        }
        if !seen.insert(parsed.id.clone()) {
            return Err(malformed(format!("duplicate id `{}`", parsed.id)));
        }
        out.push((parsed.id, tokens));
    }
    Ok(out)
}

fn read_qrels(path: &Path) -> Result<Vec<Judgment>> {
    let content = read_to_string(path)?;
    let mut out = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let malformed = |reason: &str| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = raw.split('\t').collect();
        let [query_id, doc_id, rel] = fields.as_slice() else {
            return Err(malformed("expected 3 tab-separated fields"));
        };
        let relevance = match rel.trim() {
            "0" => 0,
            "1" => 1,
            _ => return Err(malformed("relevance must be 0 or 1")),
        };
        out.push(Judgment {
            query_id: query_id.trim().to_string(),
            doc_id: doc_id.trim().to_string(),
            relevance,
        });
    }
    Ok(out)
}

/// Loads a corpus from the three-file on-disk format.
pub fn load_corpus(doc_path: &Path, query_path: &Path, qrel_path: &Path) -> Result<Corpus> {
    let documents = read_text_lines(doc_path)?
        .into_iter()
        .map(|(id, tokens)| Document { id, tokens })
        .collect();
    let queries = read_text_lines(query_path)?
        .into_iter()
        .map(|(id, tokens)| Query { id, tokens })
        .collect();
    let judgments = read_qrels(qrel_path)?;
    Corpus::new(documents, queries, judgments)
}

/// Uniform sample of `size` items without replacement, in shuffled order.
///
/// The sample is the `size`-prefix of one seeded permutation of the input,
/// so samples drawn with the same seed are nested.
pub fn subsample_pairs<T: Clone>(pairs: &[T], size: usize, seed: u64) -> Result<Vec<T>> {
    if size == 0 {
        return Err(Error::Range("sample size must be positive".into()));
    }
    if size > pairs.len() {
        return Err(Error::Range(format!(
            "requested {size} pairs but only {} are available",
            pairs.len()
        )));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut util::rng(seed));
    Ok(order[..size].iter().map(|&i| pairs[i].clone()).collect())
}

/// Splits query ids into (train, test) with a seeded shuffle; the test side
/// gets `round(fraction * n)` queries, at least one when `fraction > 0`.
pub fn split_queries(corpus: &Corpus, test_fraction: f64, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut ids: Vec<String> = corpus
        .queries()
        .iter()
        .filter(|q| !corpus.positives(&q.id).is_empty())
        .map(|q| q.id.clone())
        .collect();
    ids.sort();
    ids.shuffle(&mut util::rng(seed));
    let mut n_test = (test_fraction * ids.len() as f64).round() as usize;
    if test_fraction > 0.0 && n_test == 0 && !ids.is_empty() {
        n_test = 1;
    }
    let test: BTreeMap<String, ()> = ids[..n_test].iter().map(|s| (s.clone(), ())).collect();
    let mut train: Vec<String> = ids[n_test..].to_vec();
    train.sort();
    (train, test.into_keys().collect())
}
