//! Reproducible random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by the run seed
//! and a named purpose, with the path index selecting one of the 2^64 streams
//! of that key. Path `i` therefore sees the same attack times, breach uniforms
//! and loss draws no matter how the batch is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Named sub-streams derived from one top-level seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stream {
    Paths,
    Breach,
    Losses,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Paths => 0x7061_7468_735f_5f31,
            Stream::Breach => 0x6272_6561_6368_5f32,
            Stream::Losses => 0x6c6f_7373_6573_5f33,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStreams {
    pub seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn rng(&self, stream: Stream, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&splitmix(self.seed).to_le_bytes());
        key[8..16].copy_from_slice(&splitmix(self.seed ^ stream.tag()).to_le_bytes());
        key[16..24].copy_from_slice(&stream.tag().to_le_bytes());
        key[24..].copy_from_slice(&self.seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
