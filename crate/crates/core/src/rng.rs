//! Seeded random streams. Every consumer of randomness gets its own stream
//! keyed by `(seed, purpose, index)` so that replications, purposes and
//! service types never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream purposes.
pub mod purpose {
    pub const ARRIVAL: u32 = 1;
    pub const HOLDING: u32 = 2;
    pub const POLICY: u32 = 3;
    pub const MODEL: u32 = 4;
    pub const PLANNER: u32 = 5;
}

pub fn stream(seed: u64, purpose: u32, index: u32) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(purpose) << 32) | u64::from(index));
    rng
}

/// Seed of replication `rep` under `base`.
pub fn replication_seed(base: u64, rep: u64) -> u64 {
    base ^ rep
}
