//! Replica ensembles: a deterministic map over replica indices with
//! derived seeds, data-parallel when the `parallel` feature is enabled.
//! Results are collected in replica order, so ensemble output is
//! independent of thread count and of the parallel/sequential choice.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;
use crate::kmc::replica_seed;

/// Sequential reference implementation.
pub fn map_replicas_sequential<T: Send>(
    count: usize,
    master_seed: u64,
    f: impl Fn(usize, u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..count)
        .map(|r| f(r, replica_seed(master_seed, r as u64)))
        .collect()
}

/// Data-parallel implementation over the rayon pool.
#[cfg(feature = "parallel")]
pub fn map_replicas_parallel<T: Send>(
    count: usize,
    master_seed: u64,
    f: impl Fn(usize, u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..count)
        .into_par_iter()
        .map(|r| f(r, replica_seed(master_seed, r as u64)))
        .collect()
}

/// Run `f` for each replica with its derived seed; parallel when built
/// with the `parallel` feature, sequential otherwise.
pub fn map_replicas<T: Send>(
    count: usize,
    master_seed: u64,
    f: impl Fn(usize, u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        map_replicas_parallel(count, master_seed, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_replicas_sequential(count, master_seed, f)
    }
}
