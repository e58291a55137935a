//! Simulation core for the quadratically-parameterized regression model
//! `f_v(x) = <v ⊙ v, x>` and the noisy optimizers that act on it.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure numerical
//! code: data generation, losses and gradients, the update engines, the
//! multi-stage trainer, potential-function diagnostics, the Gibbs
//! partition-function probe, and the one-dimensional toy walks. File formats,
//! the command line and parallel execution live in the `noisebias-lab` crate.
//!
//! All randomness flows through [`rng::Stream`] so that every result is a
//! deterministic function of its seed.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod diagnostics;
pub mod engines;
mod error;
pub mod gibbs;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod trainer;
pub mod walks;

pub use error::{Error, Result};
pub use model::{Dataset, DatasetConfig, DatasetStats, ParamVector};
