//! Toy dataset generators at desk scale.

use alloc::vec::Vec;

use super::batch::Batch;
use super::rng::Rng;
use crate::math::{self, Chol};
use crate::{Error, Result};

/// Number of mixture components on the ring.
pub const MIXTURE_MODES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum ToyData {
    /// Isotropic `N(mean, sigma^2 I)` in `dim` dimensions.
    Gaussian { dim: usize, mean: Vec<f64>, sigma: f64 },
    /// Full-covariance Gaussian; `cov` is dense row-major.
    GaussianFull { mean: Vec<f64>, cov: Vec<f64> },
    /// Eight equal-weight isotropic components on a circle.
    MixtureRing { center: [f64; 2], radius: f64, comp_sigma: f64 },
    /// Two concentric circles with Gaussian radial thickness.
    TwoRings { center: [f64; 2], r_inner: f64, r_outer: f64, width: f64 },
    /// Uniform over the black cells of a 4x4 board on `[-2, 2]^2`.
    Checkerboard,
}

impl ToyData {
    pub fn standard_gaussian(dim: usize, sigma: f64) -> ToyData {
        ToyData::Gaussian {
            dim,
            mean: alloc::vec![0.0; dim],
            sigma,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ToyData::Gaussian { dim, .. } => *dim,
            ToyData::GaussianFull { mean, .. } => mean.len(),
            ToyData::MixtureRing { .. } | ToyData::TwoRings { .. } | ToyData::Checkerboard => 2,
        }
    }

    /// Component centers of the ring mixture.
    pub fn mixture_centers(center: [f64; 2], radius: f64) -> [[f64; 2]; MIXTURE_MODES] {
        let mut out = [[0.0; 2]; MIXTURE_MODES];
        for (k, c) in out.iter_mut().enumerate() {
            let a = core::f64::consts::PI * 2.0 * k as f64 / MIXTURE_MODES as f64;
            c[0] = center[0] + radius * math::cos(a);
            c[1] = center[1] + radius * math::sin(a);
        }
        out
    }

    /// Distance from `x` to the nearest ring of a two-rings dataset.
    pub fn ring_distance(&self, x: &[f64]) -> Option<f64> {
        match self {
            ToyData::TwoRings { center, r_inner, r_outer, .. } => {
                let r = math::hypot(x[0] - center[0], x[1] - center[1]);
                Some((r - r_inner).abs().min((r - r_outer).abs()))
            }
            _ => None,
        }
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Batch> {
        let mut out = Batch::zeros(n, self.dim());
        match self {
            ToyData::Gaussian { dim, mean, sigma } => {
                if *sigma <= 0.0 {
                    return Err(Error::InvalidArgument {
                        what: alloc::string::String::from("gaussian sigma must be positive"),
                    });
                }
                for i in 0..n {
                    let row = out.row_mut(i);
                    for d in 0..*dim {
                        row[d] = mean[d] + sigma * rng.normal();
                    }
                }
            }
            ToyData::GaussianFull { mean, cov } => {
                let dim = mean.len();
                let chol = Chol::factor(cov, dim).ok_or(Error::InvalidCovariance)?;
                let mut z = alloc::vec![0.0; dim];
                let mut y = alloc::vec![0.0; dim];
                for i in 0..n {
                    rng.fill_normal(&mut z);
                    chol.mul_vec(&z, &mut y);
                    let row = out.row_mut(i);
                    for d in 0..dim {
                        row[d] = mean[d] + y[d];
                    }
                }
            }
            ToyData::MixtureRing { center, radius, comp_sigma } => {
                let centers = Self::mixture_centers(*center, *radius);
                for i in 0..n {
                    let k = rng.below(MIXTURE_MODES);
                    let row = out.row_mut(i);
                    row[0] = centers[k][0] + comp_sigma * rng.normal();
                    row[1] = centers[k][1] + comp_sigma * rng.normal();
                }
            }
            ToyData::TwoRings { center, r_inner, r_outer, width } => {
                for i in 0..n {
                    let radius = if rng.below(2) == 0 { *r_inner } else { *r_outer };
                    let r = radius + width * rng.normal();
                    let a = rng.uniform() * core::f64::consts::PI * 2.0;
                    let row = out.row_mut(i);
                    row[0] = center[0] + r * math::cos(a);
                    row[1] = center[1] + r * math::sin(a);
                }
            }
            ToyData::Checkerboard => {
                // Black cells of a 4x4 unit-cell board over [-2, 2]^2.
                let mut cells = Vec::new();
                for i in 0..4 {
                    for j in 0..4 {
                        if (i + j) % 2 == 0 {
                            cells.push((i as f64 - 2.0, j as f64 - 2.0));
                        }
                    }
                }
                for i in 0..n {
                    let (cx, cy) = cells[rng.below(cells.len())];
                    let row = out.row_mut(i);
                    row[0] = cx + rng.uniform();
                    row[1] = cy + rng.uniform();
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_gaussian_moments() {
        let data = ToyData::standard_gaussian(100, 0.1);
        let mut rng = Rng::stream(5, "data", 0);
        let batch = data.sample(10_000, &mut rng).unwrap();
        for d in 0..100 {
            let v = batch.var()[d];
            assert!((v - 0.01).abs() < 0.002, "var[{d}] = {v}");
        }
    }

    #[test]
    fn mixture_ring_is_centered() {
        let data = ToyData::MixtureRing {
            center: [0.0, 0.0],
            radius: 2.0,
            comp_sigma: 0.1,
        };
        let mut rng = Rng::stream(5, "data", 1);
        let batch = data.sample(10_000, &mut rng).unwrap();
        let m = batch.mean();
        assert!(m[0].abs() < 0.05 && m[1].abs() < 0.05, "mean {m:?}");
    }

    #[test]
    fn full_cov_matches_requested_covariance() {
        let data = ToyData::GaussianFull {
            mean: alloc::vec![0.0, 0.0],
            cov: alloc::vec![1.0, 0.8, 0.8, 1.0],
        };
        let mut rng = Rng::stream(5, "data", 2);
        let batch = data.sample(50_000, &mut rng).unwrap();
        assert!((batch.var()[0] - 1.0).abs() < 0.03);
        assert!((batch.var()[1] - 1.0).abs() < 0.03);
        assert!((batch.cov(0, 1) - 0.8).abs() < 0.03);
    }

    #[test]
    fn two_rings_radii() {
        let data = ToyData::TwoRings {
            center: [0.0, 0.0],
            r_inner: 1.0,
            r_outer: 2.0,
            width: 0.05,
        };
        let mut rng = Rng::stream(5, "data", 3);
        let batch = data.sample(4_000, &mut rng).unwrap();
        for r in batch.rows() {
            assert!(data.ring_distance(r).unwrap() < 0.5);
        }
    }

    #[test]
    fn checkerboard_stays_on_black_cells() {
        let data = ToyData::Checkerboard;
        let mut rng = Rng::stream(5, "data", 4);
        let batch = data.sample(2_000, &mut rng).unwrap();
        for r in batch.rows() {
            let i = math::floor(r[0] + 2.0) as i64;
            let j = math::floor(r[1] + 2.0) as i64;
            assert_eq!((i + j) % 2, 0, "off-cell sample {r:?}");
        }
    }

    #[test]
    fn rejects_degenerate_covariance() {
        let data = ToyData::GaussianFull {
            mean: alloc::vec![0.0, 0.0],
            cov: alloc::vec![1.0, 1.0, 1.0, 1.0],
        };
        let mut rng = Rng::new(0);
        assert!(matches!(data.sample(10, &mut rng), Err(Error::InvalidCovariance)));
    }
}
