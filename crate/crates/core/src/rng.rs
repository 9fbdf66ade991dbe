//! Seeded random streams and the worker fan-out used by every estimator.
//!
//! A stream is identified by `(seed, stream, worker)`. Work of size `total`
//! is cut into `workers` contiguous shards, shard `w` draws from its own
//! stream, and partial results come back in shard order. Output is therefore
//! a function of the seed and the worker count only.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent generator for `(seed, stream, worker)`.
pub fn stream_rng(seed: u64, stream: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(stream)));
    rng.set_stream(worker as u64);
    rng
}

/// Combines two identifiers into a new stream id.
pub fn substream(stream: u64, tag: u64) -> u64 {
    splitmix64(stream.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ tag)
}

/// Worker-count configuration for sharded work.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Executor {
    workers: usize,
}

impl Default for Executor {
    fn default() -> Self {
        Executor { workers: 1 }
    }
}

impl Executor {
    pub fn new(workers: usize) -> Self {
        Executor {
            workers: workers.max(1),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Contiguous shard `w` of `0..total`.
    pub fn shard(&self, total: usize, w: usize) -> Range<usize> {
        let base = total / self.workers;
        let extra = total % self.workers;
        let start = w * base + w.min(extra);
        let len = base + usize::from(w < extra);
        start..start + len
    }

    /// Runs `job(worker, range)` for every shard and returns results in shard order.
    pub fn map_shards<T, F>(&self, total: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, Range<usize>) -> T + Sync,
    {
        if self.workers == 1 {
            return vec![job(0, 0..total)];
        }
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..self.workers)
                .map(|w| {
                    let range = self.shard(total, w);
                    let job = &job;
                    scope.spawn(move || job(w, range))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        })
    }
}
