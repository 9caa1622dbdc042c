//! Deterministic RNG substreams.
//!
//! Every source of randomness in a run is derived from the single run seed
//! plus a component name ("env.0", "policy", "replay", ...), so components
//! can be exercised in isolation and whole runs replayed exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives the named substream for a run seed.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    // FNV-1a over the name, folded into the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

/// Substream for environment `index`.
pub fn env_substream(seed: u64, index: usize) -> ChaCha8Rng {
    substream(seed, &format!("env.{index}"))
}
