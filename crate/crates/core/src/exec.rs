//! Replicate execution and seeded substreams.
//!
//! Monte Carlo loops in this crate run through [`map_indices`]. With the
//! `parallel` feature (on by default) replicates are spread over the rayon
//! pool; without it they run in a plain loop. Every replicate draws from its own
//! ChaCha stream keyed by `(seed, replicate index)`, so results do not depend on
//! scheduling or on the number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Evaluates `f(0), f(1), ..., f(len - 1)` and returns the results in index order.
pub fn map_indices<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Like [`map_indices`] but short-circuits on the first error (by index order of
/// the collected results, not by time).
pub fn try_map_indices<T, E, F>(len: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indices(len, f).into_iter().collect()
}

/// Sets the size of the global worker pool. Has no effect without the
/// `parallel` feature. Fails if the pool was already initialized.
pub fn configure_threads(threads: usize) -> crate::error::Result<()> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| crate::error::Error::InvalidInput(e.to_string()))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}

/// Generator seeded by `seed`.
pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent substream `index` of the generator seeded by `seed`.
pub fn substream(seed: u64, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives the seed of a named stage from the master seed: FNV-1a of the stage
/// name, xored into the seed, then one SplitMix64 finalization round.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
