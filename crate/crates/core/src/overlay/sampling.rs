//! Uniform sampling without replacement for selective verification.

use rand::{Rng, RngCore, SeedableRng};

use crate::rng::SimRng;

/// ceil(ptv * n / 100), clamped to n.
pub fn sample_size(ptv: u32, n: usize) -> usize {
    (((ptv as usize) * n + 99) / 100).min(n)
}

/// First `k` positions of a partial Fisher-Yates shuffle of `0..n`.
///
/// Draws depend only on the RNG, so the sample for `k` is a prefix of the
/// sample for any larger `k` under the same stream.
pub fn sample_indices<R: RngCore>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let k = k.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Per-block sampling stream split off a node's stream with a single draw, so
/// the node stream advances identically whatever the sample size.
pub fn block_stream<R: RngCore>(node_rng: &mut R) -> SimRng {
    SimRng::seed_from_u64(node_rng.next_u64())
}
