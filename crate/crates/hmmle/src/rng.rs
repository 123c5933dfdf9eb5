//! Reproducible random number streams.
//!
//! Every stochastic operation takes an explicit [`RngStream`]. Streams are
//! derived from a 64-bit master seed and a stream index with a splitmix64
//! mix, and the generator itself is ChaCha8 — a counter-based stream cipher
//! generator — so disjoint indices give statistically independent streams and
//! replications can be distributed across workers without coordination.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; used both to mix seeds and to expand them.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the stream id for a (master seed, stream index) pair.
pub fn stream_id(master_seed: u64, index: u64) -> u64 {
    let mut s = master_seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    splitmix64(&mut s)
}

/// A seeded random stream with a stable identity.
#[derive(Debug, Clone)]
pub struct RngStream {
    id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    /// Stream for the given master seed and stream index.
    pub fn derive(master_seed: u64, index: u64) -> Self {
        let id = stream_id(master_seed, index);
        let mut state = id;
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        RngStream {
            id,
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    /// Stream seeded directly from a raw 64-bit seed (index 0).
    pub fn from_seed(seed: u64) -> Self {
        Self::derive(seed, 0)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(rand_distr::StandardNormal)
    }

    /// Exponential draw with the given rate (mean 1/rate).
    pub fn exponential(&mut self, rate: f64) -> f64 {
        debug_assert!(rate > 0.0);
        let u: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
        -u.ln() / rate
    }

    /// Uniform draw on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
