//! Diversity-aware subset selection by random-subset search.
//!
//! The diversity of a set of vectors is its root-mean per-dimension variance
//! around the set mean:
//!
//! ```text
//! score = sqrt( 1/(n·d) · Σ_k Σ_f (x[k][f] − μ[f])² )
//! ```
//!
//! [`select_diverse_subset`] draws `R` uniform `k`-subsets and keeps the one
//! with the highest score. Draw `i` uses its own ChaCha stream `i` of the base
//! seed, so the winner does not depend on how draws are split across threads.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::EmbeddingStore;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiversityError {
    #[error("cannot score an empty subset")]
    EmptySubset,
    #[error("pool of {pool} cannot supply a subset of {k}")]
    PoolTooSmall { pool: usize, k: usize },
    #[error("at least one random subset must be drawn")]
    NoDraws,
    #[error("vectors have mixed dimensions")]
    DimMismatch,
    #[error("no embedding for sample {0:?}")]
    MissingEmbedding(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Root-mean per-dimension variance of `rows` around their mean.
pub fn diversity_score<R: AsRef<[f32]>>(rows: &[R]) -> Result<f64, DiversityError> {
    let first = rows.first().ok_or(DiversityError::EmptySubset)?;
    let dim = first.as_ref().len();
    if rows.iter().any(|r| r.as_ref().len() != dim) {
        return Err(DiversityError::DimMismatch);
    }
    let mut mean = vec![0f64; dim];
    Ok(score_rows(rows.iter().map(|r| r.as_ref()), rows.len(), &mut mean))
}

/// Two-pass variance; `mean` is scratch space of length `dim`.
fn score_rows<'a, I>(rows: I, n: usize, mean: &mut [f64]) -> f64
where
    I: Iterator<Item = &'a [f32]> + Clone,
{
    let dim = mean.len();
    if dim == 0 {
        return 0.0;
    }
    mean.iter_mut().for_each(|m| *m = 0.0);
    for row in rows.clone() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x as f64;
        }
    }
    let inv_n = 1.0 / n as f64;
    mean.iter_mut().for_each(|m| *m *= inv_n);
    let mut ss = 0f64;
    for row in rows {
        for (m, &x) in mean.iter().zip(row) {
            let d = x as f64 - m;
            ss += d * d;
        }
    }
    (ss / (n * dim) as f64).sqrt()
}

/// Row-major matrix of candidate vectors in pool order.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    pub ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl CandidatePool {
    pub fn from_store(store: &EmbeddingStore, ids: &[String]) -> Result<Self, DiversityError> {
        let mut data = Vec::with_capacity(ids.len() * store.dim());
        for id in ids {
            let v = store.get(id).ok_or_else(|| DiversityError::MissingEmbedding(id.clone()))?;
            data.extend_from_slice(v);
        }
        Ok(CandidatePool { ids: ids.to_vec(), dim: store.dim(), data })
    }

    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f32>]) -> Result<Self, DiversityError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) || ids.len() != rows.len() {
            return Err(DiversityError::DimMismatch);
        }
        Ok(CandidatePool { ids, dim, data: rows.concat() })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Score of the subset given by sorted pool indices.
    pub fn score_indices(&self, indices: &[usize]) -> Result<f64, DiversityError> {
        if indices.is_empty() {
            return Err(DiversityError::EmptySubset);
        }
        let mut mean = vec![0f64; self.dim];
        Ok(self.score_with(indices, &mut mean))
    }

    fn score_with(&self, indices: &[usize], mean: &mut [f64]) -> f64 {
        score_rows(indices.iter().map(|&i| self.row(i)), indices.len(), mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SelectOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Selected pool indices, ascending.
    pub indices: Vec<usize>,
    pub ids: Vec<String>,
    pub score: f64,
    /// Draw that produced the winner (0 when the whole pool is taken).
    pub draw_index: u64,
    pub draws: u64,
}

/// The `k`-subset drawn at position `draw` of the search seeded by `seed`,
/// as ascending pool indices.
pub fn draw_subset(pool_len: usize, k: usize, seed: u64, draw: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let mut v = index::sample(&mut rng, pool_len, k).into_vec();
    v.sort_unstable();
    v
}

#[derive(Clone, Copy)]
struct Best {
    score: f64,
    draw: u64,
}

impl Best {
    /// Higher score wins; equal scores go to the earlier draw.
    fn pick(self, other: Best) -> Best {
        if other.score > self.score || (other.score == self.score && other.draw < self.draw) {
            other
        } else {
            self
        }
    }
}

/// Best of `draws` random `k`-subsets of `pool` by [`diversity_score`].
pub fn select_diverse_subset(
    pool: &CandidatePool,
    k: usize,
    draws: u64,
    seed: u64,
    opts: SelectOptions,
) -> Result<Selection, DiversityError> {
    if k == 0 {
        return Err(DiversityError::EmptySubset);
    }
    if pool.len() < k {
        return Err(DiversityError::PoolTooSmall { pool: pool.len(), k });
    }
    if draws == 0 {
        return Err(DiversityError::NoDraws);
    }
    if pool.len() == k {
        let indices: Vec<usize> = (0..k).collect();
        let score = pool.score_indices(&indices)?;
        return Ok(Selection { ids: pool.ids.clone(), indices, score, draw_index: 0, draws });
    }

    let search = || {
        (0..draws)
            .into_par_iter()
            .fold(
                || (vec![0f64; pool.dim], None::<Best>),
                |(mut mean, best), draw| {
                    let subset = draw_subset(pool.len(), k, seed, draw);
                    let score = pool.score_with(&subset, &mut mean);
                    let cand = Best { score, draw };
                    (mean, Some(best.map_or(cand, |b| b.pick(cand))))
                },
            )
            .filter_map(|(_, best)| best)
            .reduce_with(Best::pick)
    };
    let best = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| DiversityError::ThreadPool(e.to_string()))?
            .install(search),
        None => search(),
    }
    .expect("at least one draw");

    let indices = draw_subset(pool.len(), k, seed, best.draw);
    let ids = indices.iter().map(|&i| pool.ids[i].clone()).collect();
    Ok(Selection { indices, ids, score: best.score, draw_index: best.draw, draws })
}
