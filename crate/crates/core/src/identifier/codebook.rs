//! Residual-quantization codebooks over hashed bag-of-token embeddings.

use std::collections::HashSet;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::util;

pub const DEFAULT_N_CODES: usize = 256;
pub const DEFAULT_N_LEVELS: usize = 32;

/// Per-level centroid tables. `levels[l][c]` is centroid `c` of level `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub dim: usize,
    pub n_codes: usize,
    pub n_levels: usize,
    pub seed: u64,
    pub levels: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSequence {
    pub doc_id: String,
    pub codes: Vec<u32>,
}

/// Feature-hashed bag of tokens, normalized to unit length.
///
/// Each token hashes (under `seed`) to a coordinate and a sign. If every
/// contribution cancels, the result is the first basis vector.
pub fn embed_document(doc: &Document, dim: usize, seed: u64) -> Result<Vec<f64>> {
    if doc.tokens.is_empty() {
        return Err(Error::Input(format!("document `{}` is empty", doc.id)));
    }
    if dim < 2 {
        return Err(Error::Input(format!("embedding dim {dim} must be at least 2")));
    }
    let mut v = vec![0.0; dim];
    for token in &doc.tokens {
        let (index, sign) = hash_token(token, dim, seed);
        v[index] += sign;
    }
    let norm = util::dot(&v, &v).sqrt();
    if norm == 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(v)
}

fn hash_token(token: &str, dim: usize, seed: u64) -> (usize, f64) {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    let word = u64::from_le_bytes(bytes);
    let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
    ((word % dim as u64) as usize, sign)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the smaller index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kmeans(points: &[Vec<f64>], k: usize, iters: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = util::rng(seed);
    let dim = points[0].len();

    // Initialize from distinct points; duplicate once distinct ones run out.
    let mut seen = HashSet::new();
    let distinct: Vec<usize> = (0..points.len())
        .filter(|&i| seen.insert(points[i].iter().map(|x| x.to_bits()).collect::<Vec<_>>()))
        .collect();
    let mut centroids: Vec<Vec<f64>> = if distinct.len() >= k {
        sample(&mut rng, distinct.len(), k)
            .into_iter()
            .map(|i| points[distinct[i]].clone())
            .collect()
    } else {
        (0..k)
            .map(|i| points[distinct[i % distinct.len()]].clone())
            .collect()
    };

    let mut assign = vec![0usize; points.len()];
    let mut dist = vec![0.0; points.len()];
    for _ in 0..iters {
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            assign[i] = c;
            dist[i] = d;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assign) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut taken = HashSet::new();
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s / n).collect();
            } else {
                // Reseed an empty cluster at the point farthest from its centroid.
                let far = (0..points.len())
                    .filter(|i| !taken.contains(i))
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dist[b] >= dist[i] => Some(b),
                        _ => Some(i),
                    });
                if let Some(i) = far {
                    taken.insert(i);
                    centroids[c] = points[i].clone();
                }
            }
        }
    }
    centroids
}

/// Trains an `n_levels`-deep residual quantizer: level `l` runs k-means on
/// what levels `< l` left unexplained.
///
/// Level seeds are derived from `seed` and the level index, so a deeper
/// codebook extends a shallower one trained with the same seed.
pub fn train_codebook(
    vectors: &[Vec<f64>],
    n_codes: usize,
    n_levels: usize,
    seed: u64,
    iters: usize,
) -> Result<Codebook> {
    if vectors.is_empty() {
        return Err(Error::Input("codebook training needs at least one vector".into()));
    }
    if n_codes == 0 || n_levels == 0 || iters == 0 {
        return Err(Error::Input("n_codes, n_levels and iters must be positive".into()));
    }
    let dim = vectors[0].len();
    if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Input("vectors must share a positive dimension".into()));
    }
    let mut residuals = vectors.to_vec();
    let mut levels = Vec::with_capacity(n_levels);
    for level in 0..n_levels {
        let level_seed = util::keyed_seed(seed, &format!("level{level}"));
        let centroids = kmeans(&residuals, n_codes, iters, level_seed);
        for r in residuals.iter_mut() {
            let (c, _) = nearest(r, &centroids);
            for (x, y) in r.iter_mut().zip(&centroids[c]) {
                *x -= y;
            }
        }
        levels.push(centroids);
    }
    Ok(Codebook {
        dim,
        n_codes,
        n_levels,
        seed,
        levels,
    })
}

impl Codebook {
    /// Sum of squared residual norms after quantizing every vector.
    pub fn reconstruction_error(&self, vectors: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for v in vectors {
            let (_, residual) = self.encode(v)?;
            total += util::dot(&residual, &residual);
        }
        Ok(total)
    }

    /// Greedy codes plus the final residual.
    fn encode(&self, vector: &[f64]) -> Result<(Vec<u32>, Vec<f64>)> {
        if vector.len() != self.dim {
            return Err(Error::Input(format!(
                "vector dim {} does not match codebook dim {}",
                vector.len(),
                self.dim
            )));
        }
        let mut residual = vector.to_vec();
        let mut codes = Vec::with_capacity(self.n_levels);
        for level in &self.levels {
            let (c, _) = nearest(&residual, level);
            for (x, y) in residual.iter_mut().zip(&level[c]) {
                *x -= y;
            }
            codes.push(c as u32);
        }
        Ok((codes, residual))
    }
}

/// Greedy per-level nearest-centroid codes (ties to the smaller index).
pub fn assign_codes(vector: &[f64], codebook: &Codebook) -> Result<Vec<u32>> {
    codebook.encode(vector).map(|(codes, _)| codes)
}

/// Assigns a code sequence to every document, making the mapping injective.
///
/// Documents are embedded with `codebook.seed`. On a full-sequence
/// collision, documents later in id order get their final code remapped to
/// the nearest unused centroid of the last level.
pub fn assign_all_codes(corpus: &Corpus, codebook: &Codebook) -> Result<Vec<CodeSequence>> {
    let mut order: Vec<&Document> = corpus.documents().iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));

    let last = codebook
        .levels
        .last()
        .ok_or_else(|| Error::Input("codebook has no levels".into()))?;
    let mut used: HashSet<Vec<u32>> = HashSet::with_capacity(order.len());
    let mut out = Vec::with_capacity(order.len());
    for doc in order {
        let v = embed_document(doc, codebook.dim, codebook.seed)?;
        let (mut codes, final_residual) = codebook.encode(&v)?;
        if used.contains(&codes) {
            // Residual entering the last level.
            let last_code = *codes.last().expect("at least one level") as usize;
            let entering: Vec<f64> = final_residual
                .iter()
                .zip(&last[last_code])
                .map(|(r, c)| r + c)
                .collect();
            let mut candidates: Vec<(f64, usize)> = last
                .iter()
                .enumerate()
                .map(|(i, c)| (sq_dist(&entering, c), i))
                .collect();
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let n = codes.len();
            let found = candidates.into_iter().find(|&(_, i)| {
                codes[n - 1] = i as u32;
                !used.contains(&codes)
            });
            if found.is_none() {
                return Err(Error::Capacity(format!(
                    "no unused final-level code left for document `{}` ({} codes per level)",
                    doc.id, codebook.n_codes
                )));
            }
        }
        used.insert(codes.clone());
        out.push(CodeSequence {
            doc_id: doc.id.clone(),
            codes,
        });
    }
    Ok(out)
}
