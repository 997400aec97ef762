//! Named random streams.
//!
//! Every stream is a xoshiro256++ generator. Its 64-bit seed is
//! `splitmix64(experiment_seed ^ fnv1a64(stream_name))`, and the generator
//! state is expanded from that seed with SplitMix64 (the `seed_from_u64`
//! convention of the xoshiro reference implementation). Uniform reals are
//! `(next_u64 >> 11) * 2^-53`, so the whole chain can be reproduced in any
//! language from the seed and the stream name alone.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Stream names used across the crate.
pub mod streams {
    pub const INIT: &str = "init";
    pub const COLLOCATION: &str = "collocation";
    pub const BOUNDARY: &str = "boundary";
    pub const INITIAL: &str = "initial";
    pub const POWER_ITERATION: &str = "power-iteration";
    pub const PROBE: &str = "probe";
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the stream `name` derived from the experiment seed.
pub fn stream_seed(seed: u64, name: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(name.as_bytes()))
}

#[derive(Clone, Debug)]
pub struct Stream {
    rng: Xoshiro256PlusPlus,
}

impl Stream {
    pub fn new(seed: u64, name: &str) -> Self {
        Self::from_seed(stream_seed(seed, name))
    }

    pub fn from_seed(seed: u64) -> Self {
        Self { rng: Xoshiro256PlusPlus::seed_from_u64(seed) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box–Muller (one draw per call, the sine branch is discarded).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
