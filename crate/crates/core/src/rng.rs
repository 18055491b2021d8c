//! Seed derivation.
//!
//! Every run gets a 64-bit run seed `splitmix64(base_seed ^ splitmix64(run))`.
//! Each consumer of randomness then draws from its own ChaCha8 stream keyed by
//! that run seed, with the 64-bit ChaCha stream id set to
//! `purpose << 32 | arm`. Streams never overlap, so the channel and arrival
//! sample paths of a run are identical no matter which policy is simulated
//! or how many draws other consumers make.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Discriminants are part of the stream id
/// and must stay stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Purpose {
    Channel = 1,
    Arrival = 2,
    StaticPolicy = 3,
    TieBreak = 4,
    TraceOffset = 5,
    Scratch = 6,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `run_index` under `base_seed`.
pub fn run_seed(base_seed: u64, run_index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(run_index))
}

pub fn substream(run_seed: u64, purpose: Purpose, arm: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(((purpose as u64) << 32) | arm as u64);
    rng
}
