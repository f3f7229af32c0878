//! Beam-search identifier generation, FLOPs accounting and document scoring.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::identifier::{IdentifierIndex, PrefixTrie};
use crate::seqmodel::{ModelConfig, SeqModel, TokenId, Vocab, BOS, EOS};

/// Retrieval depth used throughout the inference sweeps.
pub const DEFAULT_K: usize = 100;
pub const PAPER_BEAMS: [usize; 6] = [1, 5, 10, 20, 50, 100];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_size: usize,
    /// Maximum number of decoding steps, counting the `EOS` step.
    pub max_len: usize,
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 || self.max_len == 0 {
            return Err(Error::Config("beam_size and max_len must be positive".into()));
        }
        Ok(())
    }
}

/// Restricts which tokens may follow a prefix.
#[derive(Clone, Copy, Debug)]
pub enum Constraint<'a> {
    None,
    /// Paths of `trie`, with trie symbol `s` emitted as token `s + offset`.
    /// `EOS` is allowed exactly at terminal nodes.
    Trie { trie: &'a PrefixTrie, offset: TokenId },
}

/// Trie over every length-`n` window of the corpus (whole documents when
/// shorter), in token-id space. Terminal nodes carry the containing docs.
pub fn ngram_constraint_trie(corpus: &Corpus, vocab: &Vocab, n: usize) -> PrefixTrie {
    let mut trie = PrefixTrie::new();
    for (di, doc) in corpus.documents().iter().enumerate() {
        let ids = vocab.encode(&doc.tokens);
        let width = n.min(ids.len());
        for w in ids.windows(width) {
            trie.insert(w, di);
        }
    }
    trie
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedIdentifier {
    /// Generated ids, ending in `EOS` unless cut off at `max_len`.
    pub tokens: Vec<TokenId>,
    pub logprob: f64,
}

impl GeneratedIdentifier {
    pub fn is_finished(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }

    /// Tokens without the trailing `EOS`.
    pub fn body(&self) -> &[TokenId] {
        match self.tokens.split_last() {
            Some((&EOS, rest)) => rest,
            _ => &self.tokens,
        }
    }
}

struct Hyp {
    tokens: Vec<TokenId>,
    logprob: f64,
    // hidden state after consuming the last token (BOS for the empty prefix)
    h: Vec<f64>,
    node: usize,
}

fn rank(a_lp: f64, a_tokens: &[TokenId], b_lp: f64, b_tokens: &[TokenId]) -> Ordering {
    b_lp.total_cmp(&a_lp).then_with(|| a_tokens.cmp(b_tokens))
}

/// Length-synchronous beam search.
///
/// Each step expands every live hypothesis over the allowed tokens and keeps
/// the best `beam_size` extensions by cumulative log-probability, ties going
/// to the lexicographically smaller token sequence. Extensions ending in
/// `EOS` retire to the result pool. Returns the best `beam_size` finished
/// hypotheses, padded with the best unfinished ones when too few finished.
pub fn beam_search(
    model: &SeqModel,
    query: &[TokenId],
    bc: &BeamConfig,
    constraint: Constraint<'_>,
) -> Result<Vec<GeneratedIdentifier>> {
    bc.validate()?;
    let v = model.vocab_size();
    if let Constraint::Trie { trie, offset } = constraint {
        if trie.is_empty() {
            return Err(Error::Constraint("constraint trie is empty".into()));
        }
        let max_sym = (v as TokenId).saturating_sub(offset);
        if offset as usize >= v || trie.children(PrefixTrie::ROOT).iter().any(|&(s, _)| s >= max_sym)
        {
            return Err(Error::Constraint(
                "constraint tokens fall outside the model vocabulary".into(),
            ));
        }
    }
    let ctx = model.encode_query(query)?;
    let mut h0 = model.initial_state();
    let mut h1 = h0.clone();
    model.step(&ctx, &h0, BOS, &mut h1);
    std::mem::swap(&mut h0, &mut h1);

    let mut live = vec![Hyp {
        tokens: Vec::new(),
        logprob: 0.0,
        h: h0,
        node: PrefixTrie::ROOT,
    }];
    let mut finished: Vec<GeneratedIdentifier> = Vec::new();
    let b = bc.beam_size;

    for _ in 0..bc.max_len {
        // (logprob, parent, token, next trie node)
        let mut cands: Vec<(f64, usize, TokenId, usize)> = Vec::new();
        for (pi, hyp) in live.iter().enumerate() {
            let lps = model.log_probs(&hyp.h);
            match constraint {
                Constraint::None => {
                    for (tok, lp) in lps.iter().enumerate() {
                        cands.push((hyp.logprob + lp, pi, tok as TokenId, 0));
                    }
                }
                Constraint::Trie { trie, offset } => {
                    if trie.is_terminal(hyp.node) {
                        cands.push((hyp.logprob + lps[EOS as usize], pi, EOS, hyp.node));
                    }
                    for &(sym, child) in trie.children(hyp.node) {
                        let tok = sym + offset;
                        if (tok as usize) < v {
                            cands.push((hyp.logprob + lps[tok as usize], pi, tok, child));
                        }
                    }
                }
            }
        }
        if cands.is_empty() {
            break;
        }
        let cmp = |a: &(f64, usize, TokenId, usize), b: &(f64, usize, TokenId, usize)| {
            a.0.total_cmp(&b.0)
                .reverse()
                .then_with(|| live[a.1].tokens.cmp(&live[b.1].tokens))
                .then_with(|| a.2.cmp(&b.2))
        };
        if cands.len() > b {
            cands.select_nth_unstable_by(b - 1, cmp);
            cands.truncate(b);
        }
        cands.sort_by(cmp);

        let mut next_live = Vec::with_capacity(cands.len());
        for (lp, pi, tok, node) in cands {
            let parent = &live[pi];
            let mut tokens = Vec::with_capacity(parent.tokens.len() + 1);
            tokens.extend_from_slice(&parent.tokens);
            tokens.push(tok);
            if tok == EOS {
                finished.push(GeneratedIdentifier { tokens, logprob: lp });
            } else {
                let mut h = vec![0.0; parent.h.len()];
                model.step(&ctx, &parent.h, tok, &mut h);
                next_live.push(Hyp {
                    tokens,
                    logprob: lp,
                    h,
                    node,
                });
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
        // Scores only fall with length, so a full pool that beats every live
        // hypothesis is final.
        if finished.len() >= b {
            finished.sort_by(|x, y| rank(x.logprob, &x.tokens, y.logprob, &y.tokens));
            let worst_kept = finished[b - 1].logprob;
            if live.iter().all(|h| h.logprob < worst_kept) {
                break;
            }
        }
    }

    finished.sort_by(|x, y| rank(x.logprob, &x.tokens, y.logprob, &y.tokens));
    finished.truncate(b);
    if finished.len() < b {
        live.sort_by(|x, y| rank(x.logprob, &x.tokens, y.logprob, &y.tokens));
        let missing = b - finished.len();
        finished.extend(live.into_iter().take(missing).map(|h| GeneratedIdentifier {
            tokens: h.tokens,
            logprob: h.logprob,
        }));
    }
    Ok(finished)
}

/// Analytical decoder cost of one query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub flops_per_query: u64,
    pub beam_size: u64,
    pub steps: u64,
    pub per_step: u64,
}

/// `B × steps × 2(3d² + dV)`: two FLOPs per multiply-accumulate of the three
/// recurrence matrices and the output layer, per hypothesis and step.
/// Biases, nonlinearities and the query encoding are not counted.
pub fn count_flops(config: &ModelConfig, bc: &BeamConfig, steps: usize) -> Result<FlopsReport> {
    if steps == 0 {
        return Err(Error::Input("steps must be positive".into()));
    }
    if steps > bc.max_len {
        return Err(Error::Input(format!(
            "steps {steps} exceeds beam max_len {}",
            bc.max_len
        )));
    }
    let d = config.hidden_dim as u64;
    let v = config.vocab_size as u64;
    let per_step = 2 * (3 * d * d + d * v);
    let beam = bc.beam_size as u64;
    let steps = steps as u64;
    Ok(FlopsReport {
        flops_per_query: beam * steps * per_step,
        beam_size: beam,
        steps,
        per_step,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub ranked: Vec<ScoredDoc>,
}

impl RankedList {
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.ranked.iter().map(|d| d.doc_id.as_str())
    }
}

/// Turns generated identifiers into a top-`k` document ranking.
///
/// N-gram mode: every document containing a generated n-gram `g` gains
/// `exp(logprob / |g|)`. Code mode: a generated sequence resolves to at most
/// one document, which gains `exp(logprob)`. Ties rank by doc id.
pub fn score_documents(
    query_id: &str,
    generated: &[GeneratedIdentifier],
    index: &IdentifierIndex,
    corpus: &Corpus,
    vocab: &Vocab,
    k: usize,
) -> RankedList {
    let mut scores: HashMap<usize, f64> = HashMap::new();
    for g in generated {
        let body = g.body();
        if body.is_empty() {
            continue;
        }
        match index {
            IdentifierIndex::Ngram(idx) => {
                let gram = vocab.decode(body);
                let weight = (g.logprob / body.len() as f64).exp();
                for d in idx.lookup(&gram) {
                    *scores.entry(d).or_default() += weight;
                }
            }
            IdentifierIndex::Code(trie) => {
                let Some(codes) = vocab.decode_codes(body) else {
                    continue;
                };
                let weight = g.logprob.exp();
                for &d in trie.lookup(&codes) {
                    *scores.entry(d).or_default() += weight;
                }
            }
        }
    }
    let docs = corpus.documents();
    let mut ranked: Vec<ScoredDoc> = scores
        .into_iter()
        .map(|(d, score)| ScoredDoc {
            doc_id: docs[d].id.clone(),
            score,
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
    ranked.truncate(k);
    RankedList {
        query_id: query_id.to_string(),
        ranked,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub tokens: Vec<String>,
    pub logprob: f64,
}

/// One line of a decode run output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRun {
    pub query_id: String,
    pub beam: usize,
    pub flops: u64,
    pub generated: Vec<GeneratedRecord>,
    pub ranked: Vec<ScoredDoc>,
}

impl QueryRun {
    pub fn new(
        beam: usize,
        flops: u64,
        generated: &[GeneratedIdentifier],
        ranked: RankedList,
        vocab: &Vocab,
    ) -> Self {
        Self {
            query_id: ranked.query_id,
            beam,
            flops,
            generated: generated
                .iter()
                .map(|g| GeneratedRecord {
                    tokens: g
                        .tokens
                        .iter()
                        .map(|&t| vocab.token(t).unwrap_or("<unk>").to_string())
                        .collect(),
                    logprob: g.logprob,
                })
                .collect(),
            ranked: ranked.ranked,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::identifier::{build_identifier_index, Assignments, CodeSequence};
    use crate::seqmodel::build_vocab;

    fn model(d: usize, v: usize, seed: u64) -> SeqModel {
        SeqModel::init(ModelConfig {
            hidden_dim: d,
            vocab_size: v,
            max_len: 6,
            seed,
        })
        .unwrap()
    }

    fn greedy(m: &SeqModel, query: &[TokenId], max_len: usize) -> GeneratedIdentifier {
        let ctx = m.encode_query(query).unwrap();
        let mut h = m.initial_state();
        let mut next = h.clone();
        let mut input = BOS;
        let mut tokens = Vec::new();
        let mut lp = 0.0;
        for _ in 0..max_len {
            m.step(&ctx, &h, input, &mut next);
            std::mem::swap(&mut h, &mut next);
            let lps = m.log_probs(&h);
            let mut best = 0;
            for (i, &x) in lps.iter().enumerate() {
                if x > lps[best] {
                    best = i;
                }
            }
            lp += lps[best];
            tokens.push(best as TokenId);
            if best as TokenId == EOS {
                break;
            }
            input = best as TokenId;
        }
        GeneratedIdentifier { tokens, logprob: lp }
    }

    #[test]
    fn beam_one_is_greedy() {
        for seed in 0..10 {
            let m = model(5, 9, seed);
            let bc = BeamConfig {
                beam_size: 1,
                max_len: 5,
            };
            let out = beam_search(&m, &[4, 5], &bc, Constraint::None).unwrap();
            let g = greedy(&m, &[4, 5], 5);
            assert_eq!(out[0].tokens, g.tokens);
            assert!((out[0].logprob - g.logprob).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_ties_break_lexicographically() {
        let mut m = model(3, 5, 0);
        m.params.w_o.iter_mut().for_each(|x| *x = 0.0);
        let bc = BeamConfig {
            beam_size: 3,
            max_len: 2,
        };
        let out = beam_search(&m, &[4], &bc, Constraint::None).unwrap();
        // Step 1 keeps [0], [1], [2]=EOS; [2] retires. Step 2 expands [0], [1].
        let seqs: Vec<Vec<TokenId>> = out.iter().map(|g| g.tokens.clone()).collect();
        assert_eq!(seqs, vec![vec![2], vec![0, 2], vec![0, 0]]);
    }

    #[test]
    fn flops_arithmetic() {
        let cfg = ModelConfig {
            hidden_dim: 2,
            vocab_size: 4,
            max_len: 10,
            seed: 0,
        };
        let bc = |b| BeamConfig {
            beam_size: b,
            max_len: 10,
        };
        let r = count_flops(&cfg, &bc(3), 5).unwrap();
        assert_eq!(r.per_step, 40);
        assert_eq!(r.flops_per_query, 600);
        assert_eq!(r.flops_per_query, r.beam_size * r.steps * r.per_step);
        let one = count_flops(&cfg, &bc(1), 5).unwrap().flops_per_query;
        let two = count_flops(&cfg, &bc(2), 5).unwrap().flops_per_query;
        assert_eq!(two, 2 * one);
        assert!(count_flops(&cfg, &bc(1), 0).is_err());
        assert!(count_flops(&cfg, &bc(1), 11).is_err());
    }

    fn toy_corpus() -> Corpus {
        let doc = |id: &str, t: &str| Document {
            id: id.into(),
            tokens: t.split(' ').map(String::from).collect(),
        };
        Corpus::new(
            vec![doc("a", "x y z w"), doc("b", "x y q r"), doc("c", "z w x")],
            vec![],
            vec![],
        )
        .unwrap()
    }

    fn tok(vocab: &Vocab, s: &str) -> Vec<TokenId> {
        s.split(' ').map(|t| vocab.id(t).unwrap()).collect()
    }

    #[test]
    fn ngram_scoring_rules() {
        let corpus = toy_corpus();
        let vocab = build_vocab(&corpus, None);
        let index = build_identifier_index(&Assignments::Ngram { m: 1, n: 2 }, &corpus);

        // single match
        let g = vec![GeneratedIdentifier {
            tokens: [tok(&vocab, "q r"), vec![EOS]].concat(),
            logprob: -1.0,
        }];
        let r = score_documents("q", &g, &index, &corpus, &vocab, 10);
        assert_eq!(r.doc_ids().collect::<Vec<_>>(), vec!["b"]);

        // tie broken by doc id
        let g = vec![GeneratedIdentifier {
            tokens: [tok(&vocab, "x y"), vec![EOS]].concat(),
            logprob: -1.0,
        }];
        let r = score_documents("q", &g, &index, &corpus, &vocab, 10);
        assert_eq!(r.doc_ids().collect::<Vec<_>>(), vec!["a", "b"]);

        // a matches both grams, b only the first
        let g = vec![
            GeneratedIdentifier {
                tokens: [tok(&vocab, "x y"), vec![EOS]].concat(),
                logprob: 0.5f64.ln(),
            },
            GeneratedIdentifier {
                tokens: [tok(&vocab, "z w"), vec![EOS]].concat(),
                logprob: 0.25f64.ln(),
            },
        ];
        let r = score_documents("q", &g, &index, &corpus, &vocab, 2);
        assert_eq!(r.ranked[0].doc_id, "a");
        assert!((r.ranked[0].score - 1.2071).abs() < 1e-4);
        assert_eq!(r.ranked[1].doc_id, "b");
        assert!((r.ranked[1].score - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
    }

    #[test]
    fn constrained_ngram_outputs_resolve() {
        let corpus = toy_corpus();
        let vocab = build_vocab(&corpus, None);
        let trie = ngram_constraint_trie(&corpus, &vocab, 2);
        let index = build_identifier_index(&Assignments::Ngram { m: 1, n: 2 }, &corpus);
        let IdentifierIndex::Ngram(ng) = &index else {
            unreachable!()
        };
        let m = model(4, vocab.len(), 3);
        let bc = BeamConfig {
            beam_size: 20,
            max_len: 3,
        };
        let out = beam_search(&m, &tok(&vocab, "x"), &bc, Constraint::Trie { trie: &trie, offset: 0 })
            .unwrap();
        // 6 distinct bigrams in the corpus
        assert_eq!(out.len(), 6);
        for g in &out {
            assert!(g.is_finished());
            assert!(!ng.lookup(&vocab.decode(g.body())).is_empty());
        }
    }

    #[test]
    fn constrained_code_outputs_resolve() {
        let corpus = toy_corpus();
        let vocab = build_vocab(&corpus, Some(4));
        let seqs = vec![
            CodeSequence {
                doc_id: "a".into(),
                codes: vec![0, 1],
            },
            CodeSequence {
                doc_id: "b".into(),
                codes: vec![0, 3],
            },
            CodeSequence {
                doc_id: "c".into(),
                codes: vec![2, 2],
            },
        ];
        let index = build_identifier_index(&Assignments::Code(seqs), &corpus);
        let IdentifierIndex::Code(trie) = &index else {
            unreachable!()
        };
        let m = model(4, vocab.len(), 1);
        let bc = BeamConfig {
            beam_size: 2,
            max_len: 3,
        };
        let c = Constraint::Trie {
            trie,
            offset: vocab.code_offset().unwrap(),
        };
        let out = beam_search(&m, &tok(&vocab, "x"), &bc, c).unwrap();
        assert_eq!(out.len(), 2);
        for g in &out {
            let codes = vocab.decode_codes(g.body()).unwrap();
            assert_eq!(trie.lookup(&codes).len(), 1);
        }
        let r = score_documents("q", &out, &index, &corpus, &vocab, 100);
        assert_eq!(r.ranked.len(), 2);
    }

    #[test]
    fn empty_constraint_rejected() {
        let m = model(3, 6, 0);
        let trie = PrefixTrie::new();
        let bc = BeamConfig {
            beam_size: 2,
            max_len: 3,
        };
        assert!(matches!(
            beam_search(&m, &[4], &bc, Constraint::Trie { trie: &trie, offset: 0 }).unwrap_err(),
            Error::Constraint(_)
        ));
    }
}
