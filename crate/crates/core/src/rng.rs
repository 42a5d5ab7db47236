//! Seed derivation for independent, reproducible random streams.
//!
//! Every stochastic operation takes an explicit `u64` seed. Sub-streams
//! (per snapshot, per Monte-Carlo block, per AP) are derived by hashing the
//! parent seed with a tag, so results never depend on scheduling order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a sequence of tags.
pub fn derive_seed(parent: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(parent), |acc, &t| mix(acc ^ mix(t)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags, kept in one place so no two consumers collide.
pub mod stream {
    pub const GEOMETRY: u64 = 1;
    pub const PILOTS: u64 = 2;
    pub const SHADOWING: u64 = 3;
    pub const CHANNEL: u64 = 4;
    pub const MONTE_CARLO: u64 = 5;
    pub const RZF_NORMALIZATION: u64 = 6;
    pub const SNAPSHOT: u64 = 7;
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}
