//! Seeded randomness.
//!
//! Every random decision draws from xoshiro256++ seeded through SplitMix64
//! (`Xoshiro256PlusPlus::seed_from_u64`). Independent decisions taken from the
//! same user seed use distinct streams: the generator is seeded with
//! `seed ^ (stream · 0x9E3779B97F4A7C15)`.
//!
//! Shuffles are Fisher–Yates from the last index down, drawing each index
//! `j ∈ [0, i]` as `x mod (i+1)` from a raw `u64` with rejection of the
//! biased tail. Both are simple enough to reproduce in any language.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

pub const STREAM_REBALANCE: u64 = 1;
pub const STREAM_SPLIT: u64 = 2;
pub const STREAM_SYNTH: u64 = 3;
pub const STREAM_INIT: u64 = 4;
pub const STREAM_EPOCH_SHUFFLE: u64 = 5;

pub fn stream(seed: u64, stream: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Uniform integer in `[0, n)`.
pub fn below(rng: &mut Rng, n: u64) -> u64 {
    assert!(n > 0);
    let zone = u64::MAX - (u64::MAX - n + 1) % n;
    loop {
        let x = rng.next_u64();
        if x <= zone {
            return x % n;
        }
    }
}

pub fn shuffle<T>(items: &mut [T], rng: &mut Rng) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// A seeded permutation of `0..n`.
pub fn permutation(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle(&mut idx, rng);
    idx
}
