//! Seed derivation for independent, index-addressed random substreams.
//!
//! Every random draw in the crate comes from a `ChaCha12Rng` seeded by
//! [`substream`], keyed on a master seed plus a path of labels and indices.
//! A stream depends only on its own path, so generating trajectories in
//! parallel or in a different order yields the same numbers, and sweeping
//! one experiment variable leaves the streams of everything else intact.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Concrete RNG used throughout the crate.
pub type SimRng = ChaCha12Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derive a child seed from `seed`, a label and a path of indices.
pub fn derive_seed(seed: u64, label: &str, path: &[u64]) -> u64 {
    let mut h = mix(seed ^ mix(label_hash(label)));
    for &p in path {
        h = mix(h ^ mix(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

/// RNG for the substream addressed by `(seed, label, path)`.
pub fn substream(seed: u64, label: &str, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, label, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = substream(7, "traj", &[1, 2]).random();
        let b: u64 = substream(7, "traj", &[1, 2]).random();
        let c: u64 = substream(7, "traj", &[2, 1]).random();
        let d: u64 = substream(7, "fleet", &[1, 2]).random();
        let e: u64 = substream(8, "traj", &[1, 2]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, e);
    }
}
