use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Query;
use crate::error::{Error, Result};
use crate::seqmodel::model::{Cache, Params, SeqModel};
use crate::seqmodel::vocab::{TokenId, Vocab};
use crate::util;

/// A query and one identifier to generate for it. `EOS` is implicit: the
/// model always appends it after `target`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainPair {
    pub query_id: String,
    pub query: Vec<TokenId>,
    pub target: Vec<TokenId>,
}

impl TrainPair {
    pub fn new(query: &Query, vocab: &Vocab, target: Vec<TokenId>) -> Self {
        Self {
            query_id: query.id.clone(),
            query: vocab.encode(&query.tokens),
            target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Rescales the batch gradient to at most this norm when set.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 1,
            batch_size: 16,
            seed: 0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    /// 0.05 up to `d = 32`, 0.01 from `d = 64`.
    pub fn default_learning_rate(hidden_dim: usize) -> f64 {
        if hidden_dim >= 64 {
            0.01
        } else {
            0.05
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return Err(Error::Config(format!(
                "learning_rate {} must lie in (0, 1)",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub batches: usize,
    /// Mean per-token cross-entropy of each epoch.
    pub epoch_loss: Vec<f64>,
}

/// Mini-batch gradient descent on mean per-token cross-entropy.
///
/// Pairs are reshuffled each epoch from a stream seeded by `tc.seed`; the
/// result is a deterministic function of the initial model, data and config.
pub fn train(model: &mut SeqModel, pairs: &[TrainPair], tc: &TrainConfig) -> Result<TrainStats> {
    tc.validate()?;
    let v = model.vocab_size() as TokenId;
    for (i, p) in pairs.iter().enumerate() {
        if p.target.is_empty() || p.query.is_empty() {
            return Err(Error::Input(format!("pair {i} has an empty query or target")));
        }
        if p.target.len() + 1 > model.config.max_len {
            return Err(Error::Input(format!(
                "pair {i}: target of {} tokens plus EOS exceeds max_len {}",
                p.target.len(),
                model.config.max_len
            )));
        }
        if p.target.iter().chain(&p.query).any(|&t| t >= v) {
            return Err(Error::Input(format!("pair {i}: token id out of vocabulary")));
        }
    }

    let mut rng = util::rng(tc.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut grads = Params::zeros(model.hidden_dim(), model.vocab_size());
    let mut cache = Cache::default();
    let mut stats = TrainStats::default();

    for _ in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_tokens = 0usize;
        for chunk in order.chunks(tc.batch_size) {
            let batch_index = stats.batches;
            let tokens: usize = chunk.iter().map(|&i| pairs[i].target.len() + 1).sum();
            let scale = 1.0 / tokens as f64;
            grads.fill_zero();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let p = &pairs[i];
                batch_loss += model.forward_cached(&p.query, &p.target, &mut cache)?;
                model.backward(&p.query, &cache, scale, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    batch: batch_index,
                    reason: format!("loss is {batch_loss}"),
                });
            }
            let mut step = tc.learning_rate;
            if let Some(clip) = tc.clip_norm {
                let norm = grads.sq_norm().sqrt();
                if norm > clip {
                    step *= clip / norm;
                }
            }
            for ((_, w), (_, g)) in model.params.blocks_mut().into_iter().zip(grads.blocks()) {
                for (x, dx) in w.iter_mut().zip(g) {
                    *x -= step * dx;
                }
            }
            if !model.params.is_finite() {
                return Err(Error::Training {
                    batch: batch_index,
                    reason: "parameters became non-finite".into(),
                });
            }
            epoch_loss += batch_loss;
            epoch_tokens += tokens;
            stats.batches += 1;
        }
        stats
            .epoch_loss
            .push(epoch_loss / epoch_tokens.max(1) as f64);
    }
    Ok(stats)
}
