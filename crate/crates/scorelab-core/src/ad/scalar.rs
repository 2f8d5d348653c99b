//! Scalar algebras the tape can carry.
//!
//! [`Value`] is the operation set shared by tape variables and plain numbers,
//! so model code is written once and evaluated either as a recorded graph or
//! as a raw forward pass. [`Scalar`] is the subset that can live *inside* a
//! tape node: `f64`, first-order [`Dual`] numbers, and second-order [`Jet2`]
//! numbers. Running the reverse sweep over `Dual` arithmetic yields
//! mixed second derivatives (gradient of a directional derivative); over
//! `Jet2` it yields gradients of directional second derivatives.

use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::math;

/// Operations every differentiable expression supports. Constants enter only
/// through the `f64` right-hand-side operators, so implementors that need a
/// recording context (tape variables) can still satisfy the trait.
pub trait Value:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    /// Smooth ELU-like activation `x * sigmoid(x)`.
    fn silu(self) -> Self;
    fn square(self) -> Self;
    fn sqrt(self) -> Self;

    /// `bias + sum_i w[i] * x[i]`, accumulated in index order so every
    /// implementation produces the same rounding.
    fn affine(bias: Self, w: &[Self], x: &[Self]) -> Self {
        debug_assert_eq!(w.len(), x.len());
        let mut acc = bias;
        for (wi, xi) in w.iter().zip(x.iter()) {
            acc = acc + *wi * *xi;
        }
        acc
    }

    /// `sum_i terms[i]` in index order.
    fn sum(terms: &[Self]) -> Self
    where
        Self: Sized,
    {
        let mut it = terms.iter();
        let mut acc = *it.next().expect("sum of no terms");
        for t in it {
            acc = acc + *t;
        }
        acc
    }
}

/// A [`Value`] that is a concrete number: it can be built from and projected
/// to `f64`, and compared (the reverse sweep skips zero adjoints).
pub trait Scalar: Value + PartialEq + core::fmt::Debug + 'static {
    fn from_f64(v: f64) -> Self;
    fn primal(self) -> f64;
    fn is_finite(self) -> bool;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

// ── f64 ──────────────────────────────────────────────────────────────────

impl Value for f64 {
    fn exp(self) -> f64 {
        math::exp(self)
    }
    fn ln(self) -> f64 {
        math::ln(self)
    }
    fn tanh(self) -> f64 {
        math::tanh(self)
    }
    fn silu(self) -> f64 {
        self * math::sigmoid(self)
    }
    fn square(self) -> f64 {
        self * self
    }
    fn sqrt(self) -> f64 {
        math::sqrt(self)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> f64 {
        v
    }
    fn primal(self) -> f64 {
        self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

// ── first-order dual numbers ─────────────────────────────────────────────

/// `v + t·ε` with `ε² = 0`: carries one directional derivative.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub t: f64,
}

impl Dual {
    pub const fn new(v: f64, t: f64) -> Dual {
        Dual { v, t }
    }
    pub const fn constant(v: f64) -> Dual {
        Dual { v, t: 0.0 }
    }
    /// Seeded input: unit tangent.
    pub const fn seeded(v: f64) -> Dual {
        Dual { v, t: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.t + o.t)
    }
}
impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.t - o.t)
    }
}
impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.t * o.v + self.v * o.t)
    }
}
impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let q = self.v / o.v;
        Dual::new(q, (self.t - q * o.t) / o.v)
    }
}
impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.t)
    }
}
impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, c: f64) -> Dual {
        Dual::new(self.v + c, self.t)
    }
}
impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, c: f64) -> Dual {
        Dual::new(self.v - c, self.t)
    }
}
impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, c: f64) -> Dual {
        Dual::new(self.v * c, self.t * c)
    }
}
impl Div<f64> for Dual {
    type Output = Dual;
    fn div(self, c: f64) -> Dual {
        Dual::new(self.v / c, self.t / c)
    }
}

impl Value for Dual {
    fn exp(self) -> Dual {
        let e = math::exp(self.v);
        Dual::new(e, e * self.t)
    }
    fn ln(self) -> Dual {
        Dual::new(math::ln(self.v), self.t / self.v)
    }
    fn tanh(self) -> Dual {
        let u = math::tanh(self.v);
        Dual::new(u, (1.0 - u * u) * self.t)
    }
    fn silu(self) -> Dual {
        let s = math::sigmoid(self.v);
        let d = s * (1.0 + self.v * (1.0 - s));
        Dual::new(self.v * s, d * self.t)
    }
    fn square(self) -> Dual {
        Dual::new(self.v * self.v, 2.0 * self.v * self.t)
    }
    fn sqrt(self) -> Dual {
        let r = math::sqrt(self.v);
        Dual::new(r, self.t / (2.0 * r))
    }
}

impl Scalar for Dual {
    fn from_f64(v: f64) -> Dual {
        Dual::constant(v)
    }
    fn primal(self) -> f64 {
        self.v
    }
    fn is_finite(self) -> bool {
        self.v.is_finite() && self.t.is_finite()
    }
}

// ── second-order jets ────────────────────────────────────────────────────

/// Truncated Taylor jet `(f, f', f'')` along one direction; `d2` is the raw
/// second derivative, not halved.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Jet2 {
        Jet2 { v, d1, d2 }
    }
    pub const fn constant(v: f64) -> Jet2 {
        Jet2 { v, d1: 0.0, d2: 0.0 }
    }
    /// Seeded input: unit first derivative, zero curvature.
    pub const fn seeded(v: f64) -> Jet2 {
        Jet2 { v, d1: 1.0, d2: 0.0 }
    }
    /// Input seeded along a direction with component `t`.
    pub const fn seeded_dir(v: f64, t: f64) -> Jet2 {
        Jet2 { v, d1: t, d2: 0.0 }
    }

    /// Compose an outer scalar function (given `f(v)`, `f'(v)`, `f''(v)`)
    /// with this jet.
    fn chain(self, f: f64, df: f64, d2f: f64) -> Jet2 {
        Jet2::new(
            f,
            df * self.d1,
            d2f * self.d1 * self.d1 + df * self.d2,
        )
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}
impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        Jet2::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}
impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }
}
impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        let q = self.v / o.v;
        let q1 = (self.d1 - q * o.d1) / o.v;
        let q2 = (self.d2 - 2.0 * q1 * o.d1 - q * o.d2) / o.v;
        Jet2::new(q, q1, q2)
    }
}
impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2::new(-self.v, -self.d1, -self.d2)
    }
}
impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(self, c: f64) -> Jet2 {
        Jet2::new(self.v + c, self.d1, self.d2)
    }
}
impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(self, c: f64) -> Jet2 {
        Jet2::new(self.v - c, self.d1, self.d2)
    }
}
impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, c: f64) -> Jet2 {
        Jet2::new(self.v * c, self.d1 * c, self.d2 * c)
    }
}
impl Div<f64> for Jet2 {
    type Output = Jet2;
    fn div(self, c: f64) -> Jet2 {
        Jet2::new(self.v / c, self.d1 / c, self.d2 / c)
    }
}

impl Value for Jet2 {
    fn exp(self) -> Jet2 {
        let e = math::exp(self.v);
        self.chain(e, e, e)
    }
    fn ln(self) -> Jet2 {
        let inv = 1.0 / self.v;
        self.chain(math::ln(self.v), inv, -inv * inv)
    }
    fn tanh(self) -> Jet2 {
        let u = math::tanh(self.v);
        let du = 1.0 - u * u;
        self.chain(u, du, -2.0 * u * du)
    }
    fn silu(self) -> Jet2 {
        let s = math::sigmoid(self.v);
        let ds = s * (1.0 - s);
        let d2s = ds * (1.0 - 2.0 * s);
        self.chain(
            self.v * s,
            s + self.v * ds,
            2.0 * ds + self.v * d2s,
        )
    }
    fn square(self) -> Jet2 {
        Jet2::new(
            self.v * self.v,
            2.0 * self.v * self.d1,
            2.0 * self.d1 * self.d1 + 2.0 * self.v * self.d2,
        )
    }
    fn sqrt(self) -> Jet2 {
        let r = math::sqrt(self.v);
        let dr = 0.5 / r;
        self.chain(r, dr, -0.25 / (r * self.v))
    }
}

impl Scalar for Jet2 {
    fn from_f64(v: f64) -> Jet2 {
        Jet2::constant(v)
    }
    fn primal(self) -> f64 {
        self.v
    }
    fn is_finite(self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One map exercising every primitive, written once over `Value` so the
    /// same body runs as f64, dual, and jet.
    fn gauntlet<V: Value>(x: V) -> V {
        let a = (x * 0.7 + 0.2).tanh();
        let b = x.square().silu();
        let c = ((x - 0.1).square() + 1.5).sqrt();
        let d = (b + 2.0).ln();
        let e = (a * 0.3 - 0.4).exp();
        (a + b * 0.5) / c + d - e + V::affine(a, &[b, c], &[d, e])
    }

    /// Central differences of the f64 evaluation validate dual tangents and
    /// both jet slots.
    fn check_against_fd(x: f64) {
        let h = 1e-4;
        let fd1 = (gauntlet(x + h) - gauntlet(x - h)) / (2.0 * h);
        let fd2 = (gauntlet(x + h) - 2.0 * gauntlet(x) + gauntlet(x - h)) / (h * h);
        let d = gauntlet(Dual::seeded(x));
        let j = gauntlet(Jet2::seeded(x));
        assert_eq!(d.v, gauntlet(x));
        assert_eq!(j.v, gauntlet(x));
        assert!((d.t - fd1).abs() < 1e-6 * (1.0 + fd1.abs()), "dual {} vs fd {}", d.t, fd1);
        // dual and jet first-order slots agree up to rounding differences
        assert!((j.d1 - d.t).abs() <= 1e-12 * (1.0 + d.t.abs()));
        assert!((j.d2 - fd2).abs() < 1e-4 * (1.0 + fd2.abs()), "j.d2 {} vs fd {}", j.d2, fd2);
    }

    #[test]
    fn forward_slots_match_finite_differences() {
        for &x in &[0.3_f64, -0.7, 1.2, 2.4, -1.9] {
            check_against_fd(x);
        }
    }

    #[test]
    fn dual_product_rule() {
        let a = Dual::new(2.0, 1.0);
        let b = Dual::new(5.0, 0.0);
        let p = a * b;
        assert_eq!(p.v, 10.0);
        assert_eq!(p.t, 5.0);
    }

    #[test]
    fn affine_matches_fold_order() {
        let w = [1.5_f64, -2.0, 0.25];
        let x = [0.5_f64, 3.0, -1.0];
        let direct = Value::affine(0.1, &w, &x);
        let mut acc = 0.1;
        for i in 0..3 {
            acc += w[i] * x[i];
        }
        assert_eq!(direct, acc);
    }
}
