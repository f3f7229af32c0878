//! Contrastive generation loss, ranking metrics and correlation.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Query};
use crate::decode::RankedList;
use crate::error::{Error, Result};
use crate::identifier::{extract_ngram_identifiers, Assignments};
use crate::seqmodel::{SeqModel, TokenId, Vocab};
use crate::util;

pub const DEFAULT_N_NEG: usize = 31;
/// Cutoffs of the recall / miss-rate columns.
pub const RECALL_KS: [usize; 3] = [5, 20, 100];
/// Cutoff of the NDCG / MRR / MAP columns.
pub const RANK_K: usize = 10;

/// Generation losses of one query's positive and sampled negatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub query_id: String,
    pub pos_loss: f64,
    pub neg_losses: Vec<f64>,
}

/// `-ln(Σneg / (pos + Σneg))` on raw loss values.
pub fn cgl(record: &EvalRecord) -> Result<f64> {
    if record.neg_losses.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "query `{}` has no negative losses",
            record.query_id
        )));
    }
    let all = std::iter::once(&record.pos_loss).chain(&record.neg_losses);
    if all.clone().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::UndefinedMetric(format!(
            "query `{}` has a negative or non-finite loss",
            record.query_id
        )));
    }
    let neg: f64 = record.neg_losses.iter().sum();
    if neg == 0.0 {
        return Err(Error::UndefinedMetric(format!(
            "query `{}`: negative losses sum to zero",
            record.query_id
        )));
    }
    // ln((pos + neg) / neg)
    Ok((record.pos_loss / neg).ln_1p())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CglReport {
    pub mean: f64,
    pub records: Vec<EvalRecord>,
    pub per_query: Vec<f64>,
}

/// Generation loss of a document's identifier(s) for `query`: the mean over
/// its query-selected n-gram set, or the loss of its code sequence.
pub fn document_loss(
    model: &SeqModel,
    vocab: &Vocab,
    corpus: &Corpus,
    assignments: &Assignments,
    codes: Option<&[Option<Vec<u32>>]>,
    query: &Query,
    query_ids: &[TokenId],
    doc_pos: usize,
) -> Result<f64> {
    let doc = &corpus.documents()[doc_pos];
    match assignments {
        Assignments::Ngram { m, n } => {
            let set = extract_ngram_identifiers(doc, query, *m, *n)?;
            let mut total = 0.0;
            for ident in &set.identifiers {
                total += model.sequence_loss(query_ids, &vocab.encode(&ident.tokens))?;
            }
            Ok(total / set.identifiers.len() as f64)
        }
        Assignments::Code(_) => {
            let seq = codes
                .and_then(|c| c[doc_pos].as_ref())
                .ok_or_else(|| Error::Input(format!("document `{}` has no code sequence", doc.id)))?;
            let ids = vocab.encode_codes(seq).ok_or_else(|| {
                Error::Input(format!(
                    "code sequence of `{}` does not fit the vocabulary",
                    doc.id
                ))
            })?;
            model.sequence_loss(query_ids, &ids)
        }
    }
}

/// Mean CGL over `query_ids`.
///
/// The positive is the first relevant document in id order. `n_neg`
/// negatives are drawn uniformly without replacement from documents with no
/// positive judgment, from a stream keyed by `(seed, query_id)`.
pub fn cgl_eval(
    model: &SeqModel,
    vocab: &Vocab,
    corpus: &Corpus,
    assignments: &Assignments,
    query_ids: &[String],
    n_neg: usize,
    seed: u64,
) -> Result<CglReport> {
    if n_neg == 0 {
        return Err(Error::Config("n_neg must be positive".into()));
    }
    if query_ids.is_empty() {
        return Err(Error::Input("no queries to evaluate".into()));
    }
    let codes = assignments.codes_by_position(corpus);
    let mut records = Vec::with_capacity(query_ids.len());
    let mut per_query = Vec::with_capacity(query_ids.len());
    for qid in query_ids {
        let query = corpus
            .query(qid)
            .ok_or_else(|| Error::DanglingReference {
                kind: "query",
                id: qid.clone(),
            })?;
        let positives = corpus.positives(qid);
        let Some(&pos) = positives.first() else {
            return Err(Error::Input(format!("query `{qid}` has no relevant document")));
        };
        let excluded: HashSet<usize> = positives.iter().copied().collect();
        let candidates: Vec<usize> = (0..corpus.len()).filter(|i| !excluded.contains(i)).collect();
        if candidates.len() < n_neg {
            return Err(Error::Sampling(format!(
                "query `{qid}` has {} non-relevant documents, {n_neg} negatives requested",
                candidates.len()
            )));
        }
        let mut rng = util::rng(util::keyed_seed(seed, qid));
        let negatives: Vec<usize> = sample(&mut rng, candidates.len(), n_neg)
            .into_iter()
            .map(|i| candidates[i])
            .collect();

        let q_ids = vocab.encode(&query.tokens);
        let loss = |d: usize| {
            document_loss(model, vocab, corpus, assignments, codes.as_deref(), query, &q_ids, d)
        };
        let record = EvalRecord {
            query_id: qid.clone(),
            pos_loss: loss(pos)?,
            neg_losses: negatives.into_iter().map(loss).collect::<Result<_>>()?,
        };
        per_query.push(cgl(&record)?);
        records.push(record);
    }
    let mean = per_query.iter().sum::<f64>() / per_query.len() as f64;
    Ok(CglReport {
        mean,
        records,
        per_query,
    })
}

fn require_relevant(relevant: &HashSet<&str>, query_id: &str) -> Result<()> {
    if relevant.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "query `{query_id}` has no relevant documents"
        )));
    }
    Ok(())
}

/// `|relevant ∩ top-k| / |relevant|`.
pub fn recall_at_k(ranked: &RankedList, relevant: &HashSet<&str>, k: usize) -> Result<f64> {
    require_relevant(relevant, &ranked.query_id)?;
    let hits = ranked
        .doc_ids()
        .take(k)
        .filter(|d| relevant.contains(d))
        .count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Miss rate, `1 - recall@k`.
pub fn mr_at_k(ranked: &RankedList, relevant: &HashSet<&str>, k: usize) -> Result<f64> {
    recall_at_k(ranked, relevant, k).map(|r| 1.0 - r)
}

/// Binary-gain NDCG@k, MRR@k and MAP@k.
pub fn ndcg_mrr_map(
    ranked: &RankedList,
    relevant: &HashSet<&str>,
    k: usize,
) -> Result<(f64, f64, f64)> {
    require_relevant(relevant, &ranked.query_id)?;
    let mut dcg = 0.0;
    let mut rr = 0.0;
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (i, d) in ranked.doc_ids().take(k).enumerate() {
        if relevant.contains(d) {
            let rank = (i + 1) as f64;
            dcg += 1.0 / (rank + 1.0).log2();
            if hits == 0 {
                rr = 1.0 / rank;
            }
            hits += 1;
            precision_sum += hits as f64 / rank;
        }
    }
    let ideal_hits = relevant.len().min(k);
    let idcg: f64 = (1..=ideal_hits).map(|r| 1.0 / (r as f64 + 1.0).log2()).sum();
    let ndcg = if idcg > 0.0 { dcg / idcg } else { 0.0 };
    let ap = if ideal_hits > 0 {
        precision_sum / ideal_hits as f64
    } else {
        0.0
    };
    Ok((ndcg, rr, ap))
}

/// Product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Input("pearson inputs differ in length".into()));
    }
    if xs.len() < 3 {
        return Err(Error::Input("pearson needs at least 3 points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("zero variance in pearson input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Per-query metric row; `recall` is aligned with [`RECALL_KS`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub cgl: f64,
    pub recall: [f64; 3],
    pub ndcg: f64,
    pub mrr: f64,
    pub map: f64,
}

impl QueryMetrics {
    pub fn miss_rate(&self, i: usize) -> f64 {
        1.0 - self.recall[i]
    }

    pub fn evaluate(ranked: &RankedList, relevant: &HashSet<&str>, cgl: f64) -> Result<Self> {
        let mut recall = [0.0; 3];
        for (r, &k) in recall.iter_mut().zip(&RECALL_KS) {
            *r = recall_at_k(ranked, relevant, k)?;
        }
        let (ndcg, mrr, map) = ndcg_mrr_map(ranked, relevant, RANK_K)?;
        Ok(Self {
            query_id: ranked.query_id.clone(),
            cgl,
            recall,
            ndcg,
            mrr,
            map,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<QueryMetrics>,
    pub mean: QueryMetrics,
}

impl MetricReport {
    pub fn new(rows: Vec<QueryMetrics>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Input("metric report needs at least one query".into()));
        }
        let n = rows.len() as f64;
        let avg = |f: &dyn Fn(&QueryMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let mean = QueryMetrics {
            query_id: "MEAN".into(),
            cgl: avg(&|r| r.cgl),
            recall: [
                avg(&|r| r.recall[0]),
                avg(&|r| r.recall[1]),
                avg(&|r| r.recall[2]),
            ],
            ndcg: avg(&|r| r.ndcg),
            mrr: avg(&|r| r.mrr),
            map: avg(&|r| r.map),
        };
        Ok(Self { rows, mean })
    }

    pub const HEADER: [&'static str; 11] = [
        "query_id",
        "cgl",
        "recall@5",
        "mr@5",
        "recall@20",
        "mr@20",
        "recall@100",
        "mr@100",
        "ndcg@10",
        "mrr@10",
        "map@10",
    ];

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::HEADER)?;
        for row in self.rows.iter().chain(std::iter::once(&self.mean)) {
            let mut rec = vec![row.query_id.clone(), row.cgl.to_string()];
            for i in 0..RECALL_KS.len() {
                rec.push(row.recall[i].to_string());
                rec.push(row.miss_rate(i).to_string());
            }
            rec.push(row.ndcg.to_string());
            rec.push(row.mrr.to_string());
            rec.push(row.map.to_string());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        util::write_atomic(path, self.to_csv()?.as_bytes())
    }
}
