//! Seeded, schedule-independent ensemble execution.
//!
//! Every trajectory draws from its own ChaCha stream selected by
//! `(seed, index)`, and work is split into fixed-size chunks whose results
//! are merged in index order. The output therefore depends only on the seed,
//! never on the number of worker threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sme::{simulate_trajectory_indexed, Trajectory};
use crate::state::ExperimentConfig;

/// Trajectories per parallel work item.
pub const CHUNK: usize = 64;

/// Independent RNG stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed, e.g. one per sweep point of a campaign.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    stream_rng(master, index).next_u64()
}

/// Applies `f` to `0..n` in parallel and returns the results in index order.
pub fn par_map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    (0..n).into_par_iter().with_min_len(CHUNK).map(&f).collect()
}

/// Folds trajectories `0..n` into per-chunk accumulators and merges them in
/// chunk order.
pub fn par_fold_chunks<A, Init, Fold, Merge>(n: usize, init: Init, fold: Fold, merge: Merge) -> Result<A>
where
    A: Send,
    Init: Fn() -> A + Sync,
    Fold: Fn(&mut A, usize) -> Result<()> + Sync,
    Merge: Fn(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                fold(&mut acc, i)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    Ok(total)
}

/// Simulates `n` trajectories, keeping every `stride`-th state.
pub fn simulate_ensemble(config: &ExperimentConfig, n: usize, stride: usize) -> Result<Vec<Trajectory>> {
    config.validate()?;
    par_map_indexed(n, |i| Ok(simulate_trajectory_indexed(config, i as u64)?.decimate(stride)))
}

/// Summation by recursive halving; the result depends only on the order of
/// `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Running mean and centred second moment of a fixed-length series
/// (Welford updates, Chan merges).
#[derive(Clone, Debug, PartialEq)]
pub struct MomentAccumulator {
    pub count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(len: usize) -> Self {
        Self { count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn push(&mut self, series: &[f64]) -> Result<()> {
        if series.len() != self.mean.len() {
            return Err(Error::GridMismatch);
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, q), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(series) {
            let d = v - *m;
            *m += d / n;
            *q += d * (v - *m);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: MomentAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn mean(&self) -> Vec<f64> {
        self.mean.clone()
    }

    /// Standard error of the mean, using the unbiased variance.
    pub fn stderr(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.len()];
        }
        let n = self.count as f64;
        self.m2.iter().map(|q| (q.max(0.0) / (n - 1.0) / n).sqrt()).collect()
    }
}
