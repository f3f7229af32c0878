//! Conditional autoregressive identifier generator `f(q; θ)`.
//!
//! A single tanh recurrence whose hidden size `d` is the capacity knob;
//! see [`SeqModel`] for the equations and [`non_embedding_param_count`] for
//! the parameter count used on scaling plots.

mod model;
mod train;
mod vocab;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use model::{non_embedding_param_count, ModelConfig, Params, QueryContext, SeqModel};
pub use train::{train, TrainConfig, TrainPair, TrainStats};
pub use vocab::{build_vocab, code_token_text, TokenId, Vocab, BOS, EOS, N_SPECIALS, PAD, UNK};

use crate::error::{Error, Result};
use crate::util;

pub fn init_model(config: ModelConfig) -> Result<SeqModel> {
    SeqModel::init(config)
}

pub fn sequence_loss(model: &SeqModel, query: &[TokenId], target: &[TokenId]) -> Result<f64> {
    model.sequence_loss(query, target)
}

/// A trained model together with the vocabulary it was trained over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: Params,
}

impl Checkpoint {
    pub fn new(model: &SeqModel, vocab: &Vocab) -> Self {
        Self {
            config: model.config.clone(),
            vocab: vocab.clone(),
            params: model.params.clone(),
        }
    }

    pub fn into_parts(self) -> Result<(SeqModel, Vocab)> {
        let d = self.config.hidden_dim;
        let v = self.config.vocab_size;
        let expected = Params::zeros(d, v);
        for ((name, got), (_, want)) in self.params.blocks().iter().zip(expected.blocks()) {
            if got.len() != want.len() {
                return Err(Error::Input(format!(
                    "checkpoint block {name} has {} values, expected {}",
                    got.len(),
                    want.len()
                )));
            }
        }
        if self.vocab.len() != v {
            return Err(Error::Input(format!(
                "checkpoint vocabulary has {} tokens but config says {v}",
                self.vocab.len()
            )));
        }
        Ok((
            SeqModel {
                config: self.config,
                params: self.params,
            },
            self.vocab,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_atomic(path, serde_json::to_string(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SynthConfig};

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let corpus = generate_synthetic(&SynthConfig {
            n_topics: 1,
            docs_per_topic: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let vocab = build_vocab(&corpus, None);
        let model = init_model(ModelConfig {
            hidden_dim: 3,
            vocab_size: vocab.len(),
            max_len: 11,
            seed: 2,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        Checkpoint::new(&model, &vocab).save(&path).unwrap();
        let (m2, v2) = Checkpoint::load(&path).unwrap().into_parts().unwrap();
        assert_eq!(m2, model);
        assert_eq!(v2, vocab);
    }
}
