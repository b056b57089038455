//! Numerical core for a mean-field model of excitable particles coupled
//! through a slow collective variable `mu`.
//!
//! The crate is `no_std` (with `alloc`). IO, configuration and the command
//! line live in the `meanfield` crate.
#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod closure;
mod cubic;
pub mod error;
pub mod exec;
pub mod flow;
pub mod fokker_planck;
pub mod mckean_vlasov;
pub mod params;
pub mod particle;
mod quad;
pub mod rng;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use params::ModelParams;
pub use trajectory::Trajectory;

/// Version string embedded in run manifests.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
