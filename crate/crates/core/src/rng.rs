//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha::ChaCha8Rng`) keyed by
//! `seed_from_u64(seed)` with the ChaCha stream id set to a purpose-specific
//! substream. ChaCha output is specified bit-for-bit, so a `(seed, substream)`
//! pair yields the same draws on every platform. Gaussian variates come from
//! `rand_distr::StandardNormal` (ziggurat) evaluated with `libm`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Substream used by dataset generation.
pub const DATA: u64 = 0;
/// Substream used by an optimization trajectory.
pub const TRAJECTORY: u64 = 1;
/// Substream used by Monte Carlo probes of the positive orthant.
pub const PROBE: u64 = 2;
/// First substream handed out to per-trial walk streams (`WALKS + trial`).
pub const WALKS: u64 = 1 << 32;
/// First substream handed out to per-trial subspace draws.
pub const SUBSPACES: u64 = 1 << 33;

pub fn stream(seed: u64, substream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(substream);
    rng
}
