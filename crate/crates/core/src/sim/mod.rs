//! Λ-n-coalescent genealogies with infinite-sites mutations.

mod clades;
mod fast;
mod genealogy;
mod mutations;
mod rng;

pub use clades::{observable_clades, CladeStatsVector};
pub use fast::{sample_o1, sample_x};
pub use genealogy::{growth_time, simulate_genealogy, Block, BlockId, EventLog, MergerEvent};
pub use mutations::{place_mutations, Mutation, MutationSet};
pub use rng::{ReplicateSeed, Stream};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rates::RateTable;

/// Full pipeline for one replicate: genealogy, mutations, per-leaf statistics.
pub fn simulate_replicate(
    n: usize,
    rates: &RateTable<f64>,
    theta: f64,
    seed: ReplicateSeed,
    growth_rate: f64,
) -> Result<CladeStatsVector> {
    let log = simulate_genealogy(n, rates, seed, growth_rate)?;
    let muts = place_mutations(&log, theta, seed)?;
    Ok(observable_clades(&log, &muts)?.with_metadata(seed, theta, rates.spec().to_string()))
}

/// Runs `count` replicates on a pool of `threads` workers (0 = rayon default) and
/// returns their results in replicate order.
pub fn run_replicates<R, F>(count: u64, threads: usize, job: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::pre(format!("cannot build thread pool: {e}")))?;
    pool.install(|| (0..count).into_par_iter().map(&job).collect())
}
