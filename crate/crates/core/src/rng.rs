//! Seed derivation and the per-trial random stream.
//!
//! Every trial owns an independent ChaCha8 stream whose seed is a pure
//! function of `(master, cell, trial)`:
//!
//! ```text
//! seed = mix(mix(mix(master) ^ (cell * 0x9E3779B97F4A7C15)) ^ (trial * 0xC2B2AE3D27D4EB4F))
//! ```
//!
//! where `mix` is the SplitMix64 finalizer. Results therefore never depend on
//! which thread ran which trial, or in which order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type TrialRng = ChaCha8Rng;

/// SplitMix64 output function applied to `x + golden`.
pub fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, cell: u64, trial: u64) -> u64 {
    let h = mix(master);
    let h = mix(h ^ cell.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    mix(h ^ trial.wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
}

pub fn from_seed(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform on `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform(rng: &mut TrialRng) -> f64 {
    rng.random::<f64>()
}

#[inline]
pub fn standard_normal(rng: &mut TrialRng) -> f64 {
    rng.sample(StandardNormal)
}
