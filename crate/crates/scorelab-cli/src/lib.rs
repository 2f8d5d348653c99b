//! Experiment harness, file formats, and rank statistics for the
//! score-matching laboratory. The `scorelab` binary is a thin clap wrapper
//! over [`experiments`].

// Same conventions as the core crate: `!(x > 0.0)` validation fails closed
// on NaN, and indexed loops keep the subscripts of the math they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod experiments;
pub mod io;
pub mod stats;
