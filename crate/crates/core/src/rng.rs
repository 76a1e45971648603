//! Seed derivation.
//!
//! Every experiment has one root seed. Child seeds are derived per
//! `(trial, purpose)` by two rounds of the SplitMix64 finalizer:
//!
//! ```text
//! child = mix(mix(root ^ (trial + 1) * 0x9E3779B97F4A7C15) ^ purpose.tag())
//! ```
//!
//! Distinct purposes use distinct tags, so oracle, noise, estimator and
//! evaluation streams of the same trial never share a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for all sampling.
pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Role of a derived random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Per-trial root seed, further split by the purposes below.
    Trial,
    /// Clean draws `x ~ D`.
    Clean,
    /// Attribute-noise flips.
    Noise,
    /// Random noise rates drawn per trial.
    NoiseRates,
    /// Clean samples used for Monte Carlo error evaluation.
    Evaluation,
    /// Random instance generation (distributions, selectors).
    Instance,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Trial => 0x7472_6961_6C00_0001,
            Purpose::Clean => 0x636C_6561_6E00_0002,
            Purpose::Noise => 0x6E6F_6973_6500_0003,
            Purpose::NoiseRates => 0x7261_7465_7300_0004,
            Purpose::Evaluation => 0x6576_616C_0000_0005,
            Purpose::Instance => 0x696E_7374_0000_0006,
        }
    }
}

/// SplitMix64 output finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the child seed for `(index, purpose)` from `root`.
pub fn derive_seed(root: u64, index: u64, purpose: Purpose) -> u64 {
    let base = mix(root ^ index.wrapping_add(1).wrapping_mul(GOLDEN));
    mix(base ^ purpose.tag())
}

/// Generator seeded directly from `seed`.
pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Generator for the child stream `(index, purpose)` of `root`.
pub fn child_rng(root: u64, index: u64, purpose: Purpose) -> SimRng {
    rng_from_seed(derive_seed(root, index, purpose))
}
