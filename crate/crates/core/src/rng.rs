//! Seed derivation. Every random stream is keyed by the run seed plus a
//! stream label, so adding a component never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a label and a list of indices.
pub fn derive_seed(base: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for b in label.bytes() {
        h = splitmix64(h ^ b as u64);
    }
    for i in indices {
        h = splitmix64(h ^ splitmix64(*i));
    }
    h
}

pub fn stream(base: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, label, indices))
}
