//! Counter-based, splittable random streams.
//!
//! Every random draw in an experiment comes from a stream named by a
//! [`StreamKey`]: the experiment seed, the role the randomness plays, a
//! block index (typically the position in the n-grid) and a replication
//! index. Streams are ChaCha keystreams, so two distinct keys never share
//! state and results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// What a stream is used for. Part of the key, so roles never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Path,
    Oracle,
    Subsets,
    Bootstrap,
    Probe,
}

impl Role {
    fn tag(self) -> u64 {
        match self {
            Role::Path => 0x7061_7468,
            Role::Oracle => 0x6f72_6163,
            Role::Subsets => 0x7375_6273,
            Role::Bootstrap => 0x626f_6f74,
            Role::Probe => 0x7072_6f62,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub role: Role,
    pub block: u64,
    pub index: u64,
}

impl StreamKey {
    pub fn new(seed: u64, role: Role) -> Self {
        Self {
            seed,
            role,
            block: 0,
            index: 0,
        }
    }

    pub fn block(mut self, block: u64) -> Self {
        self.block = block;
        self
    }

    pub fn index(mut self, index: u64) -> Self {
        self.index = index;
        self
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut state = self.seed ^ self.role.tag().rotate_left(32);
        let mut key = [0u8; 32];
        let words = [
            splitmix64(&mut state),
            splitmix64(&mut state) ^ self.block,
            splitmix64(&mut state),
            splitmix64(&mut state),
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(self.index);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
