use crate::corpus::{generate_synthetic, load_corpus, split_queries, Corpus};
use crate::decode::{
    beam_search, ngram_constraint_trie, score_documents, BeamConfig, Constraint,
    GeneratedIdentifier, RankedList,
};
use crate::error::{Error, Result};
use crate::harness::config::{Method, SweepConfig};
use crate::identifier::{
    assign_all_codes, build_identifier_index, embed_document, extract_ngram_identifiers,
    train_codebook, Assignments, IdentifierIndex, PrefixTrie,
};
use crate::metrics::{cgl_eval, CglReport, MetricReport, QueryMetrics};
use crate::seqmodel::{
    build_vocab, train, ModelConfig, SeqModel, TokenId, TrainConfig, TrainPair, TrainStats, Vocab,
};
use crate::util;

/// Builds training pairs for `query_ids`: one pair per identifier of every
/// relevant document.
pub fn training_pairs(
    corpus: &Corpus,
    vocab: &Vocab,
    assignments: &Assignments,
    query_ids: &[String],
) -> Result<Vec<TrainPair>> {
    let codes = assignments.codes_by_position(corpus);
    let mut pairs = Vec::new();
    for qid in query_ids {
        let query = corpus.query(qid).ok_or_else(|| Error::DanglingReference {
            kind: "query",
            id: qid.clone(),
        })?;
        for &pos in corpus.positives(qid) {
            let doc = &corpus.documents()[pos];
            match assignments {
                Assignments::Ngram { m, n } => {
                    for ident in extract_ngram_identifiers(doc, query, *m, *n)?.identifiers {
                        pairs.push(TrainPair::new(query, vocab, vocab.encode(&ident.tokens)));
                    }
                }
                Assignments::Code(_) => {
                    let seq = codes.as_ref().and_then(|c| c[pos].as_ref()).ok_or_else(|| {
                        Error::Input(format!("document `{}` has no code sequence", doc.id))
                    })?;
                    let ids = vocab.encode_codes(seq).ok_or_else(|| {
                        Error::Input(format!("codes of `{}` exceed the vocabulary", doc.id))
                    })?;
                    pairs.push(TrainPair::new(query, vocab, ids));
                }
            }
        }
    }
    Ok(pairs)
}

/// Corpus, identifiers and data shared by every point of a sweep.
pub struct Pipeline {
    pub corpus: Corpus,
    pub vocab: Vocab,
    pub assignments: Assignments,
    pub index: IdentifierIndex,
    pub trie: PrefixTrie,
    pub trie_offset: TokenId,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub pairs: Vec<TrainPair>,
    /// Longest identifier plus the `EOS` step.
    pub max_len: usize,
}

impl Pipeline {
    pub fn prepare(config: &SweepConfig) -> Result<Self> {
        let corpus = match &config.corpus_dir {
            Some(dir) => load_corpus(
                &dir.join("documents.jsonl"),
                &dir.join("queries.jsonl"),
                &dir.join("qrels.tsv"),
            )?,
            None => generate_synthetic(&config.synth_config())?,
        };
        Self::from_corpus(corpus, config)
    }

    pub fn from_corpus(corpus: Corpus, config: &SweepConfig) -> Result<Self> {
        let (vocab, assignments, trie, trie_offset, max_len) = match config.method {
            Method::Ngram => {
                let vocab = build_vocab(&corpus, None);
                let trie = ngram_constraint_trie(&corpus, &vocab, config.ngram_n);
                let longest = corpus
                    .documents()
                    .iter()
                    .map(|d| d.tokens.len().min(config.ngram_n))
                    .max()
                    .unwrap_or(0);
                let assignments = Assignments::Ngram {
                    m: config.ngram_m,
                    n: config.ngram_n,
                };
                (vocab, assignments, trie, 0, longest + 1)
            }
            Method::Codebook => {
                let seed = util::keyed_seed(config.seed, "codebook");
                let vectors = corpus
                    .documents()
                    .iter()
                    .map(|d| embed_document(d, config.embed_dim, seed))
                    .collect::<Result<Vec<_>>>()?;
                let codebook =
                    train_codebook(&vectors, config.n_codes, config.n_levels, seed, config.kmeans_iters)?;
                let seqs = assign_all_codes(&corpus, &codebook)?;
                let vocab = build_vocab(&corpus, Some(config.n_codes));
                let offset = vocab.code_offset().expect("vocabulary has code tokens");
                let mut trie = PrefixTrie::new();
                for s in &seqs {
                    let pos = corpus.doc_position(&s.doc_id).expect("codes follow the corpus");
                    trie.insert(&s.codes, pos);
                }
                (vocab, Assignments::Code(seqs), trie, offset, config.n_levels + 1)
            }
        };
        let index = build_identifier_index(&assignments, &corpus);
        let (train_ids, mut test_ids) =
            split_queries(&corpus, config.test_fraction, util::keyed_seed(config.seed, "split"));
        if let Some(cap) = config.eval_queries {
            test_ids.truncate(cap);
        }
        if train_ids.is_empty() || test_ids.is_empty() {
            return Err(Error::Input("query split left an empty side".into()));
        }
        let pairs = training_pairs(&corpus, &vocab, &assignments, &train_ids)?;
        Ok(Self {
            corpus,
            vocab,
            assignments,
            index,
            trie,
            trie_offset,
            train_ids,
            test_ids,
            pairs,
            max_len,
        })
    }

    pub fn model_config(&self, hidden_dim: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            hidden_dim,
            vocab_size: self.vocab.len(),
            max_len: self.max_len,
            seed: util::keyed_seed(seed, &format!("model-d{hidden_dim}")),
        }
    }

    /// Initializes and trains a model of hidden size `hidden_dim` on `pairs`.
    pub fn train_model(
        &self,
        hidden_dim: usize,
        pairs: &[TrainPair],
        config: &SweepConfig,
    ) -> Result<(SeqModel, TrainStats)> {
        let mut model = SeqModel::init(self.model_config(hidden_dim, config.seed))?;
        let tc = TrainConfig {
            learning_rate: config
                .learning_rate
                .unwrap_or_else(|| TrainConfig::default_learning_rate(hidden_dim)),
            epochs: config.epochs,
            batch_size: config.batch_size,
            seed: util::keyed_seed(config.seed, "train"),
            clip_norm: config.clip_norm,
        };
        let stats = train(&mut model, pairs, &tc)?;
        Ok((model, stats))
    }

    pub fn beam_config(&self, beam_size: usize) -> BeamConfig {
        BeamConfig {
            beam_size,
            max_len: self.max_len,
        }
    }

    /// Trie-constrained decoding and top-`k` ranking of every test query.
    pub fn decode(
        &self,
        model: &SeqModel,
        beam_size: usize,
        k: usize,
    ) -> Result<Vec<(Vec<GeneratedIdentifier>, RankedList)>> {
        let bc = self.beam_config(beam_size);
        let constraint = Constraint::Trie {
            trie: &self.trie,
            offset: self.trie_offset,
        };
        self.test_ids
            .iter()
            .map(|qid| {
                let query = self.corpus.query(qid).expect("test ids come from the corpus");
                let generated = beam_search(model, &self.vocab.encode(&query.tokens), &bc, constraint)?;
                let ranked = score_documents(qid, &generated, &self.index, &self.corpus, &self.vocab, k);
                Ok((generated, ranked))
            })
            .collect()
    }

    pub fn rank(&self, model: &SeqModel, beam_size: usize, k: usize) -> Result<Vec<RankedList>> {
        Ok(self.decode(model, beam_size, k)?.into_iter().map(|(_, r)| r).collect())
    }

    pub fn cgl(&self, model: &SeqModel, config: &SweepConfig) -> Result<CglReport> {
        cgl_eval(
            model,
            &self.vocab,
            &self.corpus,
            &self.assignments,
            &self.test_ids,
            config.n_neg,
            util::keyed_seed(config.seed, "negatives"),
        )
    }

    /// Per-query CGL and ranking metrics over the test queries.
    pub fn evaluate(
        &self,
        model: &SeqModel,
        beam_size: usize,
        config: &SweepConfig,
    ) -> Result<MetricReport> {
        let cgl = self.cgl(model, config)?;
        let ranked = self.rank(model, beam_size, config.rank_k)?;
        self.report(&ranked, Some(&cgl.per_query))
    }

    /// Metric rows for rankings aligned with `test_ids`; CGL is NaN when not
    /// supplied.
    pub fn report(&self, ranked: &[RankedList], cgl: Option<&[f64]>) -> Result<MetricReport> {
        let rows = ranked
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let relevant = self.corpus.relevant_ids(&r.query_id);
                QueryMetrics::evaluate(r, &relevant, cgl.map_or(f64::NAN, |c| c[i]))
            })
            .collect::<Result<Vec<_>>>()?;
        MetricReport::new(rows)
    }
}
