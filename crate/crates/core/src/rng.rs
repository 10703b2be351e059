//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream keyed by `(seed, index, purpose)`.
//! Replica `i` always sees the same numbers no matter which thread runs it
//! or in which order replicas are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a keystream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Replica,
    KestenStigum,
    LimitSample,
    Laplace,
    Tree,
    Regularize,
    Prune,
    Test(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Replica => 1,
            Purpose::KestenStigum => 2,
            Purpose::LimitSample => 3,
            Purpose::Laplace => 4,
            Purpose::Tree => 5,
            Purpose::Regularize => 6,
            Purpose::Prune => 7,
            Purpose::Test(t) => 0x1000 + t,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(seed, index, purpose)`.
pub fn stream(seed: u64, index: u64, purpose: Purpose) -> StreamRng {
    let mut state = seed;
    let mut key = [0u8; 32];
    let words = [
        splitmix64(&mut state),
        splitmix64(&mut state) ^ index,
        splitmix64(&mut state) ^ purpose.tag(),
        splitmix64(&mut state),
    ];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index.rotate_left(17) ^ purpose.tag());
    rng
}

/// A fresh master seed for a sub-experiment, keyed by `salt`.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut state = seed ^ salt.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    splitmix64(&mut state)
}
