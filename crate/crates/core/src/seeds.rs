//! Deterministic seed streams. Every run derives its randomness from one
//! base seed through named streams, so artifacts reproduce bit-for-bit.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in name.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Seed for the named stream.
pub fn derive(base: u64, stream: &str) -> u64 {
    splitmix64(base ^ fnv1a(stream))
}

/// Seed for the `index`-th member of the named stream (fold, tree, row...).
pub fn derive_indexed(base: u64, stream: &str, index: u64) -> u64 {
    splitmix64(derive(base, stream) ^ splitmix64(index))
}
