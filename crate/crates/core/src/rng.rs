//! Seed-stream derivation.
//!
//! Every random draw in a run comes from a ChaCha stream keyed by
//! `(base seed, round, client, purpose)`. Streams are independent of the
//! order in which clients execute, so parallel and sequential runs produce
//! identical trajectories, and two strategies sharing a base seed see the
//! same participant draws and the same local batches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    ModelInit = 1,
    MaskInit = 2,
    Participants = 3,
    LocalBatches = 4,
    MaskSearch = 5,
    UploadMask = 6,
    Partition = 7,
    TestSplit = 8,
    Synthetic = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes the stream coordinates into a single 64-bit seed.
pub fn derive_seed(base: u64, purpose: Purpose, round: u64, client: u64) -> u64 {
    let mut h = splitmix64(base);
    h = splitmix64(h ^ purpose as u64);
    h = splitmix64(h ^ round);
    splitmix64(h ^ client)
}

pub fn stream(base: u64, purpose: Purpose, round: u64, client: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, purpose, round, client))
}
