//! Small deterministic helpers shared across the pipeline.

/// FNV-1a over a byte string; stable across platforms.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// One round of splitmix64; decorrelates nearby inputs.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed from a master seed and a purpose tag.
///
/// Different tags give decorrelated streams, so adding draws to one consumer
/// never shifts another's. The same `(seed, tag)` pair always maps to the
/// same sub-seed.
pub fn sub_seed(seed: u64, tag: &str) -> u64 {
    splitmix64(seed ^ fnv1a(tag.as_bytes()))
}
