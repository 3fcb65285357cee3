//! Deterministic seed derivation.
//!
//! Every random decision in a run draws from a stream derived from the master
//! seed plus a purpose tag and counters, so independent subsystems never
//! perturb each other's streams and whole runs replay bit-for-bit.

use rand::rngs::StdRng;
use rand::SeedableRng;

/// splitmix64 finalizer; good avalanche for cheap seed mixing.
pub fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

pub fn mix2(a: u64, b: u64) -> u64 {
    mix(a ^ mix(b))
}

pub fn mix3(a: u64, b: u64, c: u64) -> u64 {
    mix(a ^ mix(b ^ mix(c)))
}

/// Stable tag for a named stream.
pub fn tag(name: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf29ce484222325;
    for byte in name.bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// A seeded generator for the stream `(seed, name, counter)`.
pub fn stream(seed: u64, name: &str, counter: u64) -> StdRng {
    StdRng::seed_from_u64(mix3(seed, tag(name), counter))
}
