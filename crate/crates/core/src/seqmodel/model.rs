use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::vocab::{TokenId, BOS, EOS};
use crate::util::{self, dot};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim < 2 {
            return Err(Error::Config(format!(
                "hidden_dim {} must be at least 2",
                self.hidden_dim
            )));
        }
        if self.vocab_size < 5 {
            return Err(Error::Config(format!(
                "vocab_size {} must be at least 5",
                self.vocab_size
            )));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be positive".into()));
        }
        Ok(())
    }
}

/// `3d² + d + dV + V`: the recurrence, query projection, bias and output
/// layer. The input embedding table is not counted.
pub fn non_embedding_param_count(config: &ModelConfig) -> usize {
    let d = config.hidden_dim;
    let v = config.vocab_size;
    3 * d * d + d + d * v + v
}

/// Model parameters, also used as the gradient container.
///
/// Matrices are row-major. `w_h`, `w_x`, `w_q` are `d×d` acting on column
/// vectors; `embedding` and `w_o` are stored token-major (`V` rows of `d`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub embedding: Vec<f64>,
    pub w_h: Vec<f64>,
    pub w_x: Vec<f64>,
    pub w_q: Vec<f64>,
    pub b: Vec<f64>,
    pub w_o: Vec<f64>,
    pub b_o: Vec<f64>,
}

impl Params {
    pub fn zeros(d: usize, v: usize) -> Self {
        Self {
            embedding: vec![0.0; v * d],
            w_h: vec![0.0; d * d],
            w_x: vec![0.0; d * d],
            w_q: vec![0.0; d * d],
            b: vec![0.0; d],
            w_o: vec![0.0; v * d],
            b_o: vec![0.0; v],
        }
    }

    /// Parameter blocks in declaration order.
    pub fn blocks(&self) -> [(&'static str, &[f64]); 7] {
        [
            ("embedding", &self.embedding),
            ("w_h", &self.w_h),
            ("w_x", &self.w_x),
            ("w_q", &self.w_q),
            ("b", &self.b),
            ("w_o", &self.w_o),
            ("b_o", &self.b_o),
        ]
    }

    pub fn blocks_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 7] {
        [
            ("embedding", &mut self.embedding),
            ("w_h", &mut self.w_h),
            ("w_x", &mut self.w_x),
            ("w_q", &mut self.w_q),
            ("b", &mut self.b),
            ("w_o", &mut self.w_o),
            ("b_o", &mut self.b_o),
        ]
    }

    pub fn fill_zero(&mut self) {
        for (_, block) in self.blocks_mut() {
            block.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.blocks().iter().map(|(_, b)| dot(b, b)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|(_, b)| b.iter().all(|x| x.is_finite()))
    }
}

/// Single-layer tanh recurrence conditioned on the mean query embedding:
///
/// ```text
/// h_0 = 0
/// h_t = tanh(W_h h_{t-1} + W_x E[y_{t-1}] + W_q q̄ + b)
/// p(y_t | q, y_<t) = softmax(W_o h_t + b_o)
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqModel {
    pub config: ModelConfig,
    pub params: Params,
}

/// Per-query constant `W_q q̄ + b` and the pooled embedding `q̄`.
#[derive(Clone, Debug)]
pub struct QueryContext {
    pub(crate) qbar: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

/// Saved activations of one teacher-forced pass.
#[derive(Default)]
pub(crate) struct Cache {
    inputs: Vec<TokenId>,
    outputs: Vec<TokenId>,
    // h_0..h_T, each d long
    hs: Vec<f64>,
    // softmax rows, T × V
    probs: Vec<f64>,
    ctx_qbar: Vec<f64>,
}

impl SeqModel {
    /// Weights uniform in `[-1/√d, 1/√d]`, biases zero.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let v = config.vocab_size;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = util::rng(config.seed);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        };
        let params = Params {
            embedding: draw(v * d),
            w_h: draw(d * d),
            w_x: draw(d * d),
            w_q: draw(d * d),
            b: vec![0.0; d],
            w_o: draw(v * d),
            b_o: vec![0.0; v],
        };
        Ok(Self { config, params })
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    /// Count by walking the non-embedding parameter blocks.
    pub fn counted_non_embedding_params(&self) -> usize {
        self.params
            .blocks()
            .iter()
            .filter(|(name, _)| *name != "embedding")
            .map(|(_, b)| b.len())
            .sum()
    }

    fn check_ids(&self, ids: &[TokenId], what: &str) -> Result<()> {
        let v = self.vocab_size() as TokenId;
        match ids.iter().find(|&&i| i >= v) {
            Some(bad) => Err(Error::Input(format!(
                "{what} token id {bad} out of range for vocabulary of {v}"
            ))),
            None => Ok(()),
        }
    }

    fn embedding_row(&self, id: TokenId) -> &[f64] {
        let d = self.hidden_dim();
        &self.params.embedding[id as usize * d..(id as usize + 1) * d]
    }

    pub fn encode_query(&self, query: &[TokenId]) -> Result<QueryContext> {
        if query.is_empty() {
            return Err(Error::Input("query has no tokens".into()));
        }
        self.check_ids(query, "query")?;
        let d = self.hidden_dim();
        let mut qbar = vec![0.0; d];
        for &t in query {
            for (acc, x) in qbar.iter_mut().zip(self.embedding_row(t)) {
                *acc += x;
            }
        }
        let inv = 1.0 / query.len() as f64;
        qbar.iter_mut().for_each(|x| *x *= inv);
        let mut bias = self.params.b.clone();
        for (i, out) in bias.iter_mut().enumerate() {
            *out += dot(&self.params.w_q[i * d..(i + 1) * d], &qbar);
        }
        Ok(QueryContext { qbar, bias })
    }

    /// One recurrence step: the next hidden state after feeding `input`.
    pub fn step(&self, ctx: &QueryContext, h_prev: &[f64], input: TokenId, h_out: &mut [f64]) {
        let d = self.hidden_dim();
        let x = self.embedding_row(input);
        for i in 0..d {
            let row = i * d..(i + 1) * d;
            let a = ctx.bias[i]
                + dot(&self.params.w_h[row.clone()], h_prev)
                + dot(&self.params.w_x[row], x);
            h_out[i] = a.tanh();
        }
    }

    pub fn logits(&self, h: &[f64], out: &mut [f64]) {
        let d = self.hidden_dim();
        for (v, o) in out.iter_mut().enumerate() {
            *o = self.params.b_o[v] + dot(&self.params.w_o[v * d..(v + 1) * d], h);
        }
    }

    /// Natural-log next-token distribution at hidden state `h`.
    pub fn log_probs(&self, h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab_size()];
        self.logits(h, &mut out);
        let lse = log_sum_exp(&out);
        out.iter_mut().for_each(|x| *x -= lse);
        out
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.hidden_dim()]
    }

    /// Teacher-forced negative log-likelihood of `target` followed by `EOS`,
    /// summed over positions.
    pub fn sequence_loss(&self, query: &[TokenId], target: &[TokenId]) -> Result<f64> {
        if target.is_empty() {
            return Err(Error::Input("target has no tokens".into()));
        }
        self.check_ids(target, "target")?;
        let ctx = self.encode_query(query)?;
        let d = self.hidden_dim();
        let mut h = vec![0.0; d];
        let mut next = vec![0.0; d];
        let mut logits = vec![0.0; self.vocab_size()];
        let mut loss = 0.0;
        let mut input = BOS;
        for &y in target.iter().chain(std::iter::once(&EOS)) {
            self.step(&ctx, &h, input, &mut next);
            std::mem::swap(&mut h, &mut next);
            self.logits(&h, &mut logits);
            loss += log_sum_exp(&logits) - logits[y as usize];
            input = y;
        }
        Ok(loss)
    }

    /// Forward pass keeping what backprop needs. Returns the summed loss.
    pub(crate) fn forward_cached(
        &self,
        query: &[TokenId],
        target: &[TokenId],
        cache: &mut Cache,
    ) -> Result<f64> {
        self.check_ids(target, "target")?;
        let ctx = self.encode_query(query)?;
        let d = self.hidden_dim();
        let v = self.vocab_size();
        let steps = target.len() + 1;

        cache.inputs.clear();
        cache.inputs.push(BOS);
        cache.inputs.extend_from_slice(target);
        cache.outputs.clear();
        cache.outputs.extend_from_slice(target);
        cache.outputs.push(EOS);
        cache.hs.clear();
        cache.hs.resize((steps + 1) * d, 0.0);
        cache.probs.clear();
        cache.probs.resize(steps * v, 0.0);
        cache.ctx_qbar = ctx.qbar.clone();

        let mut loss = 0.0;
        for t in 0..steps {
            let (prev, rest) = cache.hs.split_at_mut((t + 1) * d);
            let h_prev = &prev[t * d..];
            let h = &mut rest[..d];
            self.step(&ctx, h_prev, cache.inputs[t], h);
            let row = &mut cache.probs[t * v..(t + 1) * v];
            self.logits(h, row);
            let lse = log_sum_exp(row);
            loss += lse - row[cache.outputs[t] as usize];
            row.iter_mut().for_each(|x| *x = (*x - lse).exp());
        }
        Ok(loss)
    }

    /// Accumulates `scale * ∂loss/∂θ` for the pass recorded in `cache`.
    pub(crate) fn backward(&self, query: &[TokenId], cache: &Cache, scale: f64, grads: &mut Params) {
        let d = self.hidden_dim();
        let v = self.vocab_size();
        let steps = cache.outputs.len();
        let p = &self.params;

        let mut dh = vec![0.0; d];
        let mut dh_next = vec![0.0; d];
        let mut da = vec![0.0; d];
        let mut dc = vec![0.0; d];
        let mut dlogits = vec![0.0; v];

        for t in (0..steps).rev() {
            let h = &cache.hs[(t + 1) * d..(t + 2) * d];
            let h_prev = &cache.hs[t * d..(t + 1) * d];
            let probs = &cache.probs[t * v..(t + 1) * v];
            for (g, &pr) in dlogits.iter_mut().zip(probs) {
                *g = scale * pr;
            }
            dlogits[cache.outputs[t] as usize] -= scale;

            dh.copy_from_slice(&dh_next);
            for (k, &g) in dlogits.iter().enumerate() {
                grads.b_o[k] += g;
                let w_row = &p.w_o[k * d..(k + 1) * d];
                let g_row = &mut grads.w_o[k * d..(k + 1) * d];
                for i in 0..d {
                    g_row[i] += g * h[i];
                    dh[i] += g * w_row[i];
                }
            }

            for i in 0..d {
                da[i] = dh[i] * (1.0 - h[i] * h[i]);
                dc[i] += da[i];
            }
            let x_id = cache.inputs[t] as usize;
            dh_next.iter_mut().for_each(|x| *x = 0.0);
            let mut dx = vec![0.0; d];
            {
                let x = &p.embedding[x_id * d..(x_id + 1) * d];
                for i in 0..d {
                    let a = da[i];
                    if a == 0.0 {
                        continue;
                    }
                    let row = i * d..(i + 1) * d;
                    let gh = &mut grads.w_h[row.clone()];
                    for j in 0..d {
                        gh[j] += a * h_prev[j];
                    }
                    let gx = &mut grads.w_x[row.clone()];
                    for j in 0..d {
                        gx[j] += a * x[j];
                    }
                    let wh = &p.w_h[row.clone()];
                    let wx = &p.w_x[row];
                    for j in 0..d {
                        dh_next[j] += a * wh[j];
                        dx[j] += a * wx[j];
                    }
                }
            }
            let ge = &mut grads.embedding[x_id * d..(x_id + 1) * d];
            for j in 0..d {
                ge[j] += dx[j];
            }
        }

        let qbar = &cache.ctx_qbar;
        let mut dqbar = vec![0.0; d];
        for i in 0..d {
            grads.b[i] += dc[i];
            let row = i * d..(i + 1) * d;
            let gq = &mut grads.w_q[row.clone()];
            let wq = &p.w_q[row];
            for j in 0..d {
                gq[j] += dc[i] * qbar[j];
                dqbar[j] += dc[i] * wq[j];
            }
        }
        let inv = 1.0 / query.len() as f64;
        for &q in query {
            let ge = &mut grads.embedding[q as usize * d..(q as usize + 1) * d];
            for j in 0..d {
                ge[j] += dqbar[j] * inv;
            }
        }
    }

    /// Summed loss over `(query, target)` pairs and its exact gradient.
    pub fn loss_and_gradient(&self, pairs: &[(&[TokenId], &[TokenId])]) -> Result<(f64, Params)> {
        let mut grads = Params::zeros(self.hidden_dim(), self.vocab_size());
        let mut cache = Cache::default();
        let mut total = 0.0;
        for (q, t) in pairs {
            total += self.forward_cached(q, t, &mut cache)?;
            self.backward(q, &cache, 1.0, &mut grads);
        }
        Ok((total, grads))
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
