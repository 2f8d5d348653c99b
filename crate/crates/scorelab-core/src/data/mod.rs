//! Datasets, deterministic RNG streams, batching, and noise schedules.

mod batch;
mod dataset;
mod rng;
mod schedule;

pub use batch::{batches, Batch, Batches};
pub use dataset::{ToyData, MIXTURE_MODES};
pub use rng::Rng;
pub use schedule::{geometric_schedule, NoiseSchedule};
