//! Keyed random streams.
//!
//! Every random draw in the simulator comes from a ChaCha8 stream whose key is
//! the master seed and whose stream id is a hash of `(entity, round, purpose)`.
//! Draws therefore do not depend on the order in which events are processed,
//! and two protocols run from the same seed see the same device behaviour.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Entity id used for server-side draws (cohort sampling, model init).
pub const SERVER: u64 = u64::MAX;

/// What a stream is used for. Part of the stream key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    ModelInit = 1,
    CohortSample = 2,
    Disturbance = 3,
    Bandwidth = 4,
    ComputeNoise = 5,
    BatchShuffle = 6,
    DataGenerate = 7,
    Partition = 8,
    Population = 9,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    master_seed: u64,
}

impl Streams {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream(&self, entity: u64, round: u64, purpose: Purpose) -> ChaCha8Rng {
        keyed_stream(self.master_seed, entity, round, purpose)
    }

    /// A 64-bit seed drawn from the keyed stream, for APIs that take a plain seed.
    pub fn seed_for(&self, entity: u64, round: u64, purpose: Purpose) -> u64 {
        use rand::RngCore;
        self.stream(entity, round, purpose).next_u64()
    }
}

pub fn keyed_stream(master_seed: u64, entity: u64, round: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = master_seed;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut s = mix(entity) ^ mix(round.rotate_left(21)) ^ mix((purpose as u64).rotate_left(42));
    rng.set_stream(splitmix64(&mut s));
    rng
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(x: u64) -> u64 {
    let mut s = x;
    splitmix64(&mut s)
}
