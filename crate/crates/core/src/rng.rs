//! Seed plumbing. Every stochastic component takes an explicit `u64` seed and
//! builds its own ChaCha stream, so results never depend on call order across
//! components.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent child seed from a parent seed and a label.
pub fn derive(seed: u64, label: &str) -> u64 {
    let mut h = mix64(seed);
    for b in label.bytes() {
        h = mix64(h ^ u64::from(b));
    }
    h
}

/// Derive a child seed from a parent seed and an index.
pub fn derive_index(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xA24B_AED4_963E_E407))
}

/// Deterministic uniform value in [0, 1) keyed by `(seed, a, b)`.
pub fn keyed_unit(seed: u64, a: u64, b: u64) -> f64 {
    let h = mix64(mix64(seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)) ^ b);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
