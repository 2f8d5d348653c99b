//! Langevin samplers over conditional score fields.
//!
//! Sampling is per dimension: `x_d` runs a one-dimensional chain
//! `x <- x + (eps/2) s(x) + sqrt(eps) z` with the prefix `x_{<d}` frozen at
//! its already-sampled values. The annealed variant walks a decreasing noise
//! schedule, taking the stage-`i` field with step `eps_i = eps0 *
//! sigma_i^2 / sigma_L^2` and warm-starting each stage from the last; stage
//! one starts from the standard normal prior (or a caller-provided point,
//! which is how restoration works).

use alloc::vec::Vec;

use crate::data::{Batch, NoiseSchedule, Rng};
use crate::field::{AnnealedScoreSource, ScoreField};
use crate::math::sqrt;
use crate::{Error, Result};

/// A chain whose state leaves `|x| <= DIVERGENCE_BOUND` is declared
/// divergent and aborted with its indices.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct LangevinConfig {
    /// Step size at the final (smallest) noise level.
    pub eps0: f64,
    /// Steps per stage.
    pub steps: usize,
    pub schedule: NoiseSchedule,
}

impl LangevinConfig {
    pub fn new(eps0: f64, steps: usize, schedule: NoiseSchedule) -> Result<LangevinConfig> {
        if !(eps0 > 0.0) || !eps0.is_finite() {
            return Err(Error::InvalidArgument {
                what: alloc::format!("langevin step eps0 must be positive and finite, got {eps0}"),
            });
        }
        if steps == 0 {
            return Err(Error::InvalidArgument {
                what: alloc::string::String::from("langevin steps must be at least 1"),
            });
        }
        Ok(LangevinConfig { eps0, steps, schedule })
    }

    /// Defaults tuned for the 2-D toy datasets.
    pub fn toy(schedule: NoiseSchedule) -> LangevinConfig {
        LangevinConfig { eps0: 1e-3, steps: 100, schedule }
    }

    /// Stage step `eps0 * sigma_i^2 / sigma_L^2`; exactly `eps0` at the last
    /// stage.
    pub fn step_size(&self, stage: usize) -> f64 {
        let s = self.schedule.sigma(stage);
        let last = self.schedule.last();
        // The ratio is formed first so it collapses to exactly 1.0 at the
        // final stage.
        self.eps0 * ((s * s) / (last * last))
    }
}

fn chain(
    score: &mut dyn FnMut(f64) -> f64,
    x0: f64,
    eps: f64,
    steps: usize,
    rng: &mut Rng,
    sample: usize,
    dim: usize,
) -> Result<f64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument {
            what: alloc::format!("langevin step must be positive and finite, got {eps}"),
        });
    }
    let half = 0.5 * eps;
    let root = sqrt(eps);
    let mut x = x0;
    for step in 0..steps {
        let s = score(x);
        if !s.is_finite() {
            return Err(Error::SamplerDiverged { sample, dim, step });
        }
        x = x + half * s + root * rng.normal();
        if !(x.abs() <= DIVERGENCE_BOUND) {
            return Err(Error::SamplerDiverged { sample, dim, step });
        }
    }
    Ok(x)
}

/// One-dimensional chain: `steps` iterations of
/// `x <- x + (eps/2) score(x) + sqrt(eps) z`, one normal draw per step.
pub fn langevin_1d(
    mut score: impl FnMut(f64) -> f64,
    x0: f64,
    eps: f64,
    steps: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if !x0.is_finite() {
        return Err(Error::NonFiniteInput { what: "chain start" });
    }
    chain(&mut score, x0, eps, steps, rng, 0, 0)
}

fn check_source(source: &dyn AnnealedScoreSource, config: &LangevinConfig) -> Result<()> {
    if config.schedule.len() != source.stages() {
        return Err(Error::DimensionMismatch {
            what: "schedule stages",
            expected: source.stages(),
            got: config.schedule.len(),
        });
    }
    Ok(())
}

/// Annealed chain for dimension `d`. `prefix` must be `dim` long with finite
/// entries; positions `>= d` are ignored by the fields but still pass
/// through them, so they must be ordinary numbers. `init` of `None` draws
/// the start from the standard normal prior.
pub fn annealed_langevin_dim(
    source: &dyn AnnealedScoreSource,
    prefix: &[f64],
    d: usize,
    config: &LangevinConfig,
    rng: &mut Rng,
    init: Option<f64>,
) -> Result<f64> {
    check_source(source, config)?;
    if prefix.len() != source.dim() {
        return Err(Error::DimensionMismatch {
            what: "sample prefix",
            expected: source.dim(),
            got: prefix.len(),
        });
    }
    if d >= source.dim() {
        return Err(Error::IndexOutOfRange { index: d, dim: source.dim() });
    }
    if !prefix.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput { what: "sample prefix" });
    }
    if let Some(v) = init {
        if !v.is_finite() {
            return Err(Error::NonFiniteInput { what: "chain start" });
        }
    }
    let mut x = match init {
        Some(v) => v,
        None => rng.normal(),
    };
    for stage in 0..config.schedule.len() {
        let eps = config.step_size(stage);
        let mut head = source.stage_field(stage).dim_head(prefix, d)?;
        x = chain(&mut *head, x, eps, config.steps, rng, 0, d)?;
    }
    Ok(x)
}

fn relabel(e: Error, sample: usize) -> Error {
    match e {
        Error::SamplerDiverged { dim, step, .. } => Error::SamplerDiverged { sample, dim, step },
        other => other,
    }
}

/// One joint sample on its own rng stream (`index` under `master`), so the
/// result does not depend on how samples are scheduled across threads.
pub fn sample_one(
    source: &dyn AnnealedScoreSource,
    config: &LangevinConfig,
    master: u64,
    index: usize,
) -> Result<Vec<f64>> {
    let mut rng = Rng::stream(master, "joint-chain", index as u64);
    let mut x = alloc::vec![0.0; source.dim()];
    for d in 0..source.dim() {
        x[d] = annealed_langevin_dim(source, &x, d, config, &mut rng, None)
            .map_err(|e| relabel(e, index))?;
    }
    Ok(x)
}

/// `n` joint samples, dimensions sampled in order, each dimension by its own
/// annealed chain conditioned on the sampled prefix.
pub fn sample_joint(
    source: &dyn AnnealedScoreSource,
    config: &LangevinConfig,
    n: usize,
    master: u64,
) -> Result<Batch> {
    let mut out = Batch::zeros(n, source.dim());
    for i in 0..n {
        let row = sample_one(source, config, master, i)?;
        out.row_mut(i).copy_from_slice(&row);
    }
    Ok(out)
}

/// `x^ = x~ + sigma^2 s(x~)` under a field for the `sigma`-smoothed
/// distribution: the one-step posterior-mean denoiser.
pub fn single_step_denoise(
    field: &dyn ScoreField,
    x_noisy: &[f64],
    sigma: f64,
) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument {
            what: alloc::format!("denoise sigma must be positive and finite, got {sigma}"),
        });
    }
    let s = field.score_all(x_noisy)?;
    Ok(x_noisy.iter().zip(&s).map(|(x, sd)| x + sigma * sigma * sd).collect())
}

/// Per-dimension annealed chains initialized at the corrupted point instead
/// of the prior.
pub fn langevin_restore(
    source: &dyn AnnealedScoreSource,
    x_noisy: &[f64],
    config: &LangevinConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    check_source(source, config)?;
    if x_noisy.len() != source.dim() {
        return Err(Error::DimensionMismatch {
            what: "corrupted point",
            expected: source.dim(),
            got: x_noisy.len(),
        });
    }
    if !x_noisy.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput { what: "corrupted point" });
    }
    let mut x = x_noisy.to_vec();
    for d in 0..source.dim() {
        x[d] = annealed_langevin_dim(source, &x, d, config, rng, Some(x_noisy[d]))?;
    }
    Ok(x)
}
