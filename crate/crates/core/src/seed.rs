//! Deterministic sub-seed derivation.
//!
//! Every source of randomness in an experiment (weight init, label
//! corruption, per-epoch shuffles, dropout masks, MC passes) is driven by a
//! child seed derived from the experiment seed and a role. The derivation is
//! a fixed splitmix64-style hash chain, so a config file plus its seed fully
//! determines every random draw.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for a named role, e.g. `derive(seed, "corruption")`.
pub fn derive(parent: u64, role: &str) -> u64 {
    let mut h = mix(parent ^ GOLDEN);
    for &b in role.as_bytes() {
        h = mix(h ^ u64::from(b));
    }
    h
}

/// Child seed for an indexed role, e.g. pass k of an MC run.
pub fn derive_indexed(parent: u64, role: &str, index: u64) -> u64 {
    mix(derive(parent, role) ^ mix(index.wrapping_add(GOLDEN)))
}

/// Seeded RNG stream. ChaCha8 keeps the stream stable across platforms and
/// library versions.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_deterministic_and_role_sensitive() {
        assert_eq!(derive(42, "init"), derive(42, "init"));
        assert_ne!(derive(42, "init"), derive(42, "corruption"));
        assert_ne!(derive(42, "init"), derive(43, "init"));
    }

    #[test]
    fn indexed_roles_do_not_collide_on_small_indices() {
        let a: Vec<u64> = (0..100).map(|k| derive_indexed(7, "pass", k)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(a.len(), b.len(), "derived seeds collided");
    }
}
