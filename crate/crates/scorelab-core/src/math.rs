//! Float helpers routed through `libm` so std and `no_std` builds share
//! bit-identical transcendentals.

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// Logistic sigmoid, evaluated on the sign branch that keeps `exp` bounded.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// stored packed row-major: row d holds entries `L[d][0..=d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chol {
    dim: usize,
    l: alloc::vec::Vec<f64>,
}

impl Chol {
    /// Factor a dense row-major `dim x dim` matrix. Fails unless every pivot
    /// is strictly positive.
    pub fn factor(a: &[f64], dim: usize) -> Option<Chol> {
        assert_eq!(a.len(), dim * dim);
        let mut l = alloc::vec![0.0; dim * (dim + 1) / 2];
        let idx = |r: usize, c: usize| r * (r + 1) / 2 + c;
        for r in 0..dim {
            for c in 0..=r {
                let mut s = a[r * dim + c];
                for k in 0..c {
                    s -= l[idx(r, k)] * l[idx(c, k)];
                }
                if r == c {
                    if s <= 0.0 || !s.is_finite() {
                        return None;
                    }
                    l[idx(r, r)] = sqrt(s);
                } else {
                    l[idx(r, c)] = s / l[idx(c, c)];
                }
            }
        }
        Some(Chol { dim, l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L[r][c]` for `c <= r`.
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(c <= r && r < self.dim);
        self.l[r * (r + 1) / 2 + c]
    }

    /// Solve `L z = b` in place.
    pub fn forward_solve(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.dim);
        for r in 0..self.dim {
            let mut s = b[r];
            for c in 0..r {
                s -= self.at(r, c) * b[c];
            }
            b[r] = s / self.at(r, r);
        }
    }

    /// Solve `A x = b` for the factored matrix `A = L L^T`.
    pub fn solve(&self, b: &mut [f64]) {
        self.forward_solve(b);
        for r in (0..self.dim).rev() {
            let mut s = b[r];
            for c in r + 1..self.dim {
                s -= self.at(c, r) * b[c];
            }
            b[r] = s / self.at(r, r);
        }
    }

    /// `y = L x`: turns standard normals into correlated draws.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        for r in 0..self.dim {
            let mut s = 0.0;
            for c in 0..=r {
                s += self.at(r, c) * x[c];
            }
            y[r] = s;
        }
    }

    /// `sum_d ln L[d][d]` (half the log determinant of the factored matrix).
    pub fn half_logdet(&self) -> f64 {
        let mut s = 0.0;
        for d in 0..self.dim {
            s += ln(self.at(d, d));
        }
        s
    }
}

/// Mean and (population) variance with the first element as a shift, so a
/// constant slice reports a variance of exactly zero.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    assert!(!xs.is_empty());
    let shift = xs[0];
    let n = xs.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &x in xs {
        let d = x - shift;
        sum += d;
        sum_sq += d * d;
    }
    let mean_d = sum / n;
    (shift + mean_d, sum_sq / n - mean_d * mean_d)
}

pub fn mean(xs: &[f64]) -> f64 {
    mean_var(xs).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_slice_has_exactly_zero_variance() {
        let xs = [0.1234567890123_f64; 1000];
        let (m, v) = mean_var(&xs);
        assert_eq!(m, 0.1234567890123);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn mean_var_matches_direct_computation() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (m, v) = mean_var(&xs);
        assert!((m - 2.5).abs() < 1e-15);
        assert!((v - 1.25).abs() < 1e-15);
    }

    #[test]
    fn cholesky_solve_inverts_mul() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0];
        let c = Chol::factor(&a, 3).unwrap();
        let x = [0.3, -1.1, 0.7];
        let mut b = [0.0; 3];
        // b = A x computed directly from the dense matrix.
        for r in 0..3 {
            for k in 0..3 {
                b[r] += a[r * 3 + k] * x[k];
            }
        }
        c.solve(&mut b);
        for d in 0..3 {
            assert!((b[d] - x[d]).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_is_symmetric_and_bounded() {
        for i in -40..=40 {
            let x = i as f64;
            let s = sigmoid(x);
            assert!((0.0..=1.0).contains(&s));
            assert!((s + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }
}
