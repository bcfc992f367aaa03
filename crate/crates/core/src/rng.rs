//! Seeded random streams.
//!
//! Every random block of a scenario draws from its own ChaCha8 stream,
//! selected by a 64-bit seed plus a [`Stream`] tag, so adding draws to one
//! block never perturbs another.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::C64;

/// Independent stream tags within one scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Placement,
    Direct,
    DeviceIrs,
    IrsAp,
    Tasks,
    /// Initial IRS phases for the given multistart index.
    PhaseInit(u32),
    RandomPhase,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Placement => 1,
            Stream::Direct => 2,
            Stream::DeviceIrs => 3,
            Stream::IrsAp => 4,
            Stream::Tasks => 5,
            Stream::RandomPhase => 6,
            Stream::PhaseInit(k) => 0x100 + u64::from(k),
        }
    }
}

pub fn stream(seed: u64, tag: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag.id());
    rng
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a scenario seed from a base seed and a sequence of indices.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base ^ 0x9e37_79b9_7f4a_7c15), |acc, &p| {
        mix(acc ^ mix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)))
    })
}

/// Uniform draw in `(0, 1]`.
#[inline]
pub fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// Circularly symmetric complex Gaussian with unit variance (Box–Muller:
/// Rayleigh magnitude and uniform phase).
#[inline]
pub fn complex_normal<R: Rng>(rng: &mut R) -> C64 {
    let r = (-open_unit(rng).ln()).sqrt();
    let phase = TAU * rng.gen::<f64>();
    C64::from_polar(r, phase)
}

/// Uniform draw in `[lo, hi]`; `lo == hi` yields `lo` exactly.
#[inline]
pub fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}
