//! Deterministic seed derivation for independent RNG streams.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent sub-seed from `(seed, tag)`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix(seed ^ mix(tag))
}

/// Derive a sub-seed from a string label (stage names, branch names).
pub fn derive_seed_str(seed: u64, label: &str) -> u64 {
    let mut acc = 0xcbf2_9ce4_8422_2325u64; // FNV-1a
    for b in label.bytes() {
        acc ^= b as u64;
        acc = acc.wrapping_mul(0x0000_0100_0000_01b3);
    }
    derive_seed(seed, acc)
}
