use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::SynthConfig;
use crate::error::{Error, Result};
use crate::scalefit::FitConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    ModelSize,
    DataSize,
    Beam,
}

impl SweepKind {
    /// Metric columns fitted after the sweep.
    pub fn fitted_series(self) -> &'static [&'static str] {
        match self {
            SweepKind::ModelSize | SweepKind::DataSize => &["cgl"],
            SweepKind::Beam => &["mr@5", "mr@20", "mr@100"],
        }
    }

    /// Name of the fitted law in fit reports.
    pub fn law(self) -> &'static str {
        match self {
            SweepKind::ModelSize => "model_size",
            SweepKind::DataSize => "data_size",
            SweepKind::Beam => "inference_flops",
        }
    }

    pub fn x_label(self) -> &'static str {
        match self {
            SweepKind::ModelSize => "non-embedding parameters",
            SweepKind::DataSize => "training pairs",
            SweepKind::Beam => "inference FLOPs per query",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ngram,
    Codebook,
}

/// Everything a sweep depends on, as one flat key space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sweep_kind: SweepKind,
    pub method: Method,
    /// Hidden sizes of a model-size sweep.
    pub capacities: Vec<usize>,
    /// Training-pair counts of a data-size sweep.
    pub data_sizes: Vec<usize>,
    /// Beam sizes of a beam sweep.
    pub beams: Vec<usize>,
    /// Hidden size for data-size and beam sweeps.
    pub hidden_dim: usize,

    /// Directory with `documents.jsonl`, `queries.jsonl` and `qrels.tsv`;
    /// the synthetic corpus below is used when unset.
    pub corpus_dir: Option<PathBuf>,
    pub n_topics: usize,
    pub docs_per_topic: usize,
    pub doc_len: usize,
    pub topic_vocab: usize,
    pub shared_vocab: usize,
    pub query_len: usize,
    pub queries_per_doc: usize,
    pub test_fraction: f64,

    pub ngram_m: usize,
    pub ngram_n: usize,
    pub n_codes: usize,
    pub n_levels: usize,
    pub embed_dim: usize,
    pub kmeans_iters: usize,

    pub epochs: usize,
    pub batch_size: usize,
    /// Defaults to a capacity-dependent rate when unset.
    pub learning_rate: Option<f64>,
    pub clip_norm: Option<f64>,

    pub n_neg: usize,
    /// Caps the number of test queries evaluated.
    pub eval_queries: Option<usize>,
    /// Beam size for the ranking metrics of model- and data-size sweeps.
    pub eval_beam: usize,
    pub rank_k: usize,

    pub fit: FitConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Accept a 3-point beam sweep.
    pub allow_three_points: bool,
    pub plot_log_y: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        Self {
            sweep_kind: SweepKind::ModelSize,
            method: Method::Ngram,
            capacities: vec![8, 16, 32, 64, 128],
            data_sizes: vec![500, 1000, 2000, 4000, 8000],
            beams: vec![1, 5, 10, 20, 50, 100],
            hidden_dim: 32,
            corpus_dir: None,
            n_topics: synth.n_topics,
            docs_per_topic: synth.docs_per_topic,
            doc_len: synth.doc_len,
            topic_vocab: synth.topic_vocab,
            shared_vocab: synth.shared_vocab,
            query_len: synth.query_len,
            queries_per_doc: synth.queries_per_doc,
            test_fraction: 0.1,
            ngram_m: 3,
            ngram_n: 3,
            n_codes: 32,
            n_levels: 4,
            embed_dim: 64,
            kmeans_iters: 15,
            epochs: 1,
            batch_size: 16,
            learning_rate: None,
            clip_norm: Some(5.0),
            n_neg: 31,
            eval_queries: None,
            eval_beam: 10,
            rank_k: 100,
            fit: FitConfig::default(),
            seed: 0,
            out_dir: PathBuf::from("runs/sweep"),
            workers: 1,
            allow_three_points: false,
            plot_log_y: false,
        }
    }
}

fn strictly_increasing(name: &str, values: &[usize], min_points: usize) -> Result<()> {
    if values.len() < min_points {
        return Err(Error::Config(format!(
            "{name} needs at least {min_points} values, got {}",
            values.len()
        )));
    }
    if values.contains(&0) {
        return Err(Error::Config(format!("{name} values must be positive")));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

impl SweepConfig {
    /// Reads a `.toml` or `.json` file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            _ => {
                return Err(Error::Config(format!(
                    "{}: config must be .toml or .json",
                    path.display()
                )))
            }
        };
        Ok(config)
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_topics: self.n_topics,
            docs_per_topic: self.docs_per_topic,
            doc_len: self.doc_len,
            topic_vocab: self.topic_vocab,
            shared_vocab: self.shared_vocab,
            query_len: self.query_len,
            queries_per_doc: self.queries_per_doc,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.sweep_kind {
            SweepKind::ModelSize => strictly_increasing("capacities", &self.capacities, 4)?,
            SweepKind::DataSize => strictly_increasing("data_sizes", &self.data_sizes, 4)?,
            SweepKind::Beam => {
                let min = if self.allow_three_points { 3 } else { 4 };
                strictly_increasing("beams", &self.beams, min)?
            }
        }
        if self.corpus_dir.is_none() {
            self.synth_config().validate()?;
        }
        if !(0.0..1.0).contains(&self.test_fraction) || self.test_fraction == 0.0 {
            return Err(Error::Config("test_fraction must lie in (0, 1)".into()));
        }
        let positive = [
            ("hidden_dim", self.hidden_dim),
            ("ngram_m", self.ngram_m),
            ("ngram_n", self.ngram_n),
            ("n_codes", self.n_codes),
            ("n_levels", self.n_levels),
            ("embed_dim", self.embed_dim),
            ("kmeans_iters", self.kmeans_iters),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("n_neg", self.n_neg),
            ("eval_beam", self.eval_beam),
            ("rank_k", self.rank_k),
            ("workers", self.workers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.eval_queries == Some(0) {
            return Err(Error::Config("eval_queries must be positive".into()));
        }
        self.fit.validate()
    }
}
