//! Seed derivation. Every randomized stage owns a seed derived from the run
//! seed plus a stream tag, so subsystems stay decoupled and reruns are
//! byte-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed, a stream tag, and an index.
pub fn derive(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix(base);
    for b in tag.as_bytes() {
        h = mix(h ^ u64::from(*b));
    }
    mix(h ^ index)
}

/// Deterministic RNG for a derived stream.
pub fn stream(base: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, tag, index))
}

/// Stateless hash of up to three indices into [0, 1). Used for per-pixel /
/// per-ray noise where carrying an RNG through parallel loops would be
/// awkward.
pub fn unit_hash(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    let h = mix(mix(mix(seed ^ a).wrapping_add(b)) ^ c);
    // 53 high bits -> uniform double in [0, 1)
    (h >> 11) as f64 / (1u64 << 53) as f64
}
