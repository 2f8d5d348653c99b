//! Geometric noise schedule for annealed objectives and samplers.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Strictly decreasing noise levels `sigma_1 > ... > sigma_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
}

/// Levels with constant ratio `r = (sigma_last / sigma_first)^(1/(L-1))`;
/// both endpoints are reproduced exactly.
pub fn geometric_schedule(sigma_first: f64, sigma_last: f64, levels: usize) -> Result<NoiseSchedule> {
    if !(sigma_first.is_finite() && sigma_last.is_finite()) {
        return Err(Error::NonFiniteInput { what: "schedule endpoints" });
    }
    if levels < 2 {
        return Err(Error::InvalidSchedule { reason: "need at least two levels" });
    }
    if !(sigma_first > sigma_last && sigma_last > 0.0) {
        return Err(Error::InvalidSchedule {
            reason: "need sigma_first > sigma_last > 0",
        });
    }
    let ratio = crate::math::powf(sigma_last / sigma_first, 1.0 / (levels - 1) as f64);
    let mut sigmas = Vec::with_capacity(levels);
    sigmas.push(sigma_first);
    for i in 1..levels - 1 {
        sigmas.push(sigma_first * crate::math::powf(ratio, i as f64));
    }
    sigmas.push(sigma_last);
    Ok(NoiseSchedule { sigmas })
}

impl NoiseSchedule {
    /// Single-level schedule, for un-annealed training runs that still go
    /// through the staged loop.
    pub fn single(sigma: f64) -> NoiseSchedule {
        NoiseSchedule { sigmas: alloc::vec![sigma] }
    }

    /// Explicit levels, e.g. restored from a checkpoint. Levels must be
    /// positive, finite, and strictly decreasing.
    pub fn from_sigmas(sigmas: Vec<f64>) -> Result<NoiseSchedule> {
        if sigmas.is_empty() {
            return Err(Error::InvalidSchedule { reason: "need at least one level" });
        }
        if !sigmas.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::InvalidSchedule {
                reason: "levels must be positive and finite",
            });
        }
        if sigmas.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidSchedule {
                reason: "levels must be strictly decreasing",
            });
        }
        Ok(NoiseSchedule { sigmas })
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }
    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }
    pub fn sigma(&self, i: usize) -> f64 {
        self.sigmas[i]
    }
    pub fn first(&self) -> f64 {
        self.sigmas[0]
    }
    pub fn last(&self) -> f64 {
        *self.sigmas.last().unwrap()
    }
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_second_level() {
        // (1.0, 0.04, 10): ratio 0.04^(1/9); reference value computed with
        // an independent bignum evaluation of exp(ln(0.04)/9).
        let s = geometric_schedule(1.0, 0.04, 10).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.first(), 1.0);
        assert_eq!(s.last(), 0.04);
        assert!(
            (s.sigma(1) - 0.699_315_786_765_562_5).abs() < 1e-12,
            "sigma_2 = {}",
            s.sigma(1)
        );
    }

    #[test]
    fn explicit_levels_validate() {
        let s = NoiseSchedule::from_sigmas(alloc::vec![1.0, 0.5, 0.1]).unwrap();
        assert_eq!(s.sigmas(), &[1.0, 0.5, 0.1]);
        assert!(NoiseSchedule::from_sigmas(alloc::vec![]).is_err());
        assert!(NoiseSchedule::from_sigmas(alloc::vec![1.0, 1.0]).is_err());
        assert!(NoiseSchedule::from_sigmas(alloc::vec![0.5, 1.0]).is_err());
        assert!(NoiseSchedule::from_sigmas(alloc::vec![1.0, -0.5]).is_err());
        let round = geometric_schedule(1.0, 0.04, 10).unwrap();
        assert_eq!(NoiseSchedule::from_sigmas(round.sigmas().to_vec()).unwrap(), round);
    }

    #[test]
    fn ratios_are_constant() {
        let s = geometric_schedule(2.0, 0.01, 7).unwrap();
        let r0 = s.sigma(1) / s.sigma(0);
        for i in 1..s.len() - 1 {
            let r = s.sigma(i + 1) / s.sigma(i);
            assert!((r - r0).abs() < 1e-12);
        }
        for i in 0..s.len() - 1 {
            assert!(s.sigma(i) > s.sigma(i + 1));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(geometric_schedule(0.04, 1.0, 10).is_err());
        assert!(geometric_schedule(1.0, 0.0, 10).is_err());
        assert!(geometric_schedule(1.0, 0.5, 1).is_err());
        assert!(geometric_schedule(f64::NAN, 0.5, 3).is_err());
    }
}
