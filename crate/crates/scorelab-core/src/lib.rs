//! Score-matching laboratory: numerics core.
//!
//! Everything in this crate is deterministic given an explicit seed and runs
//! on plain `f64`. The crate is `no_std`-compatible (it needs `alloc`); file
//! formats, CLI plumbing, and wall-clock timing live in the companion crate.
//!
//! Layout:
//! - [`ad`]: scalar-tape reverse-mode autodiff, nested with forward-mode
//!   dual/jet numbers so objectives can differentiate through x-derivatives.
//! - [`data`]: toy dataset generators, seeded RNG streams, batching, and the
//!   geometric noise schedule.
//! - [`net`]: dense and masked (autoregressive) layers shared by the models.
//! - [`field`]: conditional score fields, both analytic (Gaussian) and
//!   learned (masked context network + shared score head).
//! - [`objective`]: composite, sliced, denoising, and exact score-matching
//!   losses plus the analytic divergence they estimate.
//! - [`sample`]: per-dimension (annealed) Langevin samplers, single-step
//!   denoising, and corruption repair.
//! - [`train`]: Adam, staged training loops, loss traces.
//! - [`vae`]: implicit-encoder VAE trained with score-based entropy
//!   gradients.

#![cfg_attr(not(feature = "std"), no_std)]
// Validation uses `!(x > 0.0)` so NaN fails closed, and indexed loops keep
// the subscripts of the math they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod ad;
pub mod data;
pub mod error;
pub mod fdcheck;
pub mod field;
pub mod math;
pub mod net;
pub mod objective;
pub mod sample;
pub mod train;
pub mod vae;

pub use error::{Error, Result};

