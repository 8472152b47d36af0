//! Seeded random streams.
//!
//! Every run derives independent sub-streams from one base seed by mixing a
//! label path into it, so results do not depend on the order in which
//! workers consume randomness.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `base` and a path of labels.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

/// Stream labels used when deriving sub-seeds.
pub mod label {
    pub const FOLDS: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const SUBSAMPLE: u64 = 3;
    pub const SYNTH: u64 = 4;
    pub const GRID: u64 = 5;
}

/// Counter-based generator (ChaCha8) that remembers its seed and counts the
/// uniform draws taken through [`FmRng::uniform`].
#[derive(Debug, Clone)]
pub struct FmRng {
    seed: u64,
    inner: ChaCha8Rng,
    uniform_draws: u64,
}

impl FmRng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            uniform_draws: 0,
        }
    }

    /// A child stream labelled by `path`.
    pub fn child(&self, path: &[u64]) -> Self {
        Self::from_seed(derive_seed(self.seed, path))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform_draws(&self) -> u64 {
        self.uniform_draws
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        self.uniform_draws += 1;
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for FmRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
