//! Named sub-seeds and counter-based random streams.
//!
//! A run is reproduced from one master seed. Each consumer (query
//! generation, synthetic draws, walks) derives its own seed from the master
//! seed and a label, and every random walk gets its own ChaCha stream keyed by
//! `(query seed, walk index)`, so results do not depend on thread scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const QUERIES: &str = "queries";
pub const WALKS: &str = "walks";
pub const SYNTHETIC: &str = "synthetic";

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Derives the seed for the consumer named `label`.
pub fn sub_seed(master: u64, label: &str) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(fnv1a(label));
    rng.next_u64()
}

/// Derives the seed of item `index` (a query, a retry round) under `parent`.
pub fn indexed_seed(parent: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(parent);
    rng.set_stream(index);
    rng.next_u64()
}

/// A generator whose stream can be repositioned to any walk index.
pub struct WalkStreams {
    rng: ChaCha8Rng,
}

impl WalkStreams {
    pub fn new(query_seed: u64) -> Self {
        WalkStreams {
            rng: ChaCha8Rng::seed_from_u64(query_seed),
        }
    }

    /// Returns the generator positioned at the start of walk `walk_index`.
    pub fn walk(&mut self, walk_index: u64) -> &mut ChaCha8Rng {
        self.rng.set_stream(walk_index);
        self.rng.set_word_pos(0);
        &mut self.rng
    }
}
