//! Seed derivation and deterministic parallel replication.
//!
//! Every stochastic routine takes a master seed. Replicate `i` of a task
//! draws from ChaCha8 stream `i` of a generator keyed by the task seed, so the
//! numbers a replicate sees never depend on scheduling or worker count.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type StreamRng = ChaCha8Rng;

/// Independent generator for replicate `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a master seed and a purpose label (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed labels keep the random streams of different roles disjoint.
pub mod label {
    pub const H0_PATHS: u64 = 1;
    pub const H1_PATHS: u64 = 2;
    pub const CALIBRATION: u64 = 3;
    pub const MISS: u64 = 4;
    pub const SCORE_PATHS: u64 = 5;
    pub const HOLDOUT: u64 = 6;
}

/// Maps `f` over `0..count` on a pool of `workers` threads, preserving index order.
///
/// `workers == 0` means "use rayon's default".
pub fn par_map<T, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if workers == 1 {
        return (0..count).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Pool(e.to_string()))?;
    pool.install(|| (0..count).into_par_iter().map(f).collect())
}
