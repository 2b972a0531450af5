//! Seeded, splittable random streams.
//!
//! Every random object in the crate is addressed by a path of integers under a
//! root seed, e.g. `(seed, trial, polynomial)`. Each path maps to its own
//! ChaCha stream, so adding draws to one path never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

/// A node in the stream tree. Cheap to copy; derive children with [`SeedTree::child`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { key: splitmix64(seed) }
    }

    pub fn child(self, index: u64) -> Self {
        Self {
            key: splitmix64(self.key ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    /// Identifier of this node, usable as a provenance label.
    pub fn key(self) -> u64 {
        self.key
    }

    /// Generator for this node. Children of the node are independent of it.
    pub fn rng(self) -> StreamRng {
        let mut seed = [0u8; 32];
        let mut k = self.key;
        for chunk in seed.chunks_mut(8) {
            k = splitmix64(k);
            chunk.copy_from_slice(&k.to_le_bytes());
        }
        ChaCha20Rng::from_seed(seed)
    }
}
