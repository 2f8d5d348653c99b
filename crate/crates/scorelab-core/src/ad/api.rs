//! Whole-program differentiation entry points.
//!
//! A [`TapeFn`] is a scalar program `f(theta, x)` written once over the
//! generic scalar type; the entry points instantiate it at `f64` for plain
//! gradients and at [`Dual`] for derivatives that are themselves
//! differentiated in reverse.

use alloc::vec;
use alloc::vec::Vec;

use super::params::{Binder, ParamStore};
use super::scalar::{Dual, Scalar};
use super::tape::{Tape, Var};
use crate::{Error, Result};

/// A scalar-valued program over parameters and an input vector.
pub trait TapeFn {
    fn eval<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        params: &Binder<'t, S>,
        x: &[Var<'t, S>],
    ) -> Var<'t, S>;
}

fn ensure_finite(xs: &[f64], what: &'static str) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput { what })
    }
}

/// Value of `f` and its gradient with respect to every parameter.
pub fn grad<F: TapeFn>(f: &F, params: &ParamStore, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    ensure_finite(x, "grad input")?;
    ensure_finite(params.values(), "grad parameters")?;
    let tape: Tape<f64> = Tape::new();
    let binder = Binder::bind(&tape, params);
    let xs: Vec<Var<'_, f64>> = x.iter().map(|&v| tape.leaf(v)).collect();
    let out = f.eval(&tape, &binder, &xs);
    let adj = tape.backward(out);
    let mut g = vec![0.0; params.len()];
    binder.collect_adjoints(&adj, |a| a, &mut g);
    Ok((out.value(), g))
}

/// Value of `f` and its partial derivative along input dimension `d`,
/// computed in one forward pass with a seeded dual input.
pub fn directional_deriv<F: TapeFn>(
    f: &F,
    params: &ParamStore,
    x: &[f64],
    d: usize,
) -> Result<(f64, f64)> {
    ensure_finite(x, "directional_deriv input")?;
    if d >= x.len() {
        return Err(Error::IndexOutOfRange { index: d, dim: x.len() });
    }
    let tape: Tape<Dual> = Tape::new();
    let binder = Binder::bind(&tape, params);
    let xs: Vec<Var<'_, Dual>> = x
        .iter()
        .enumerate()
        .map(|(j, &v)| tape.leaf(if j == d { Dual::seeded(v) } else { Dual::constant(v) }))
        .collect();
    let out = f.eval(&tape, &binder, &xs);
    let o = out.value();
    Ok((o.v, o.t))
}

/// Gradient with respect to the parameters of the directional derivative
/// `d f / d x_d`: a reverse sweep over the dual-valued tape, reading the
/// tangent slot of each parameter adjoint.
pub fn grad_of_directional<F: TapeFn>(
    f: &F,
    params: &ParamStore,
    x: &[f64],
    d: usize,
) -> Result<Vec<f64>> {
    ensure_finite(x, "grad_of_directional input")?;
    if d >= x.len() {
        return Err(Error::IndexOutOfRange { index: d, dim: x.len() });
    }
    let tape: Tape<Dual> = Tape::new();
    let binder = Binder::bind(&tape, params);
    let xs: Vec<Var<'_, Dual>> = x
        .iter()
        .enumerate()
        .map(|(j, &v)| tape.leaf(if j == d { Dual::seeded(v) } else { Dual::constant(v) }))
        .collect();
    let out = f.eval(&tape, &binder, &xs);
    let adj = tape.backward_seeded(&[(out, Dual::constant(1.0))]);
    let mut g = vec![0.0; params.len()];
    binder.collect_adjoints(&adj, |a| a.t, &mut g);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::scalar::Value;

    /// f(theta, x) = theta_0 * x_0^2
    struct ThetaXSquared;
    impl TapeFn for ThetaXSquared {
        fn eval<'t, S: Scalar>(
            &self,
            _tape: &'t Tape<S>,
            p: &Binder<'t, S>,
            x: &[Var<'t, S>],
        ) -> Var<'t, S> {
            p.var(0) * x[0].square()
        }
    }

    /// f(theta, x) = exp(theta_0 * x_0)
    struct ExpThetaX;
    impl TapeFn for ExpThetaX {
        fn eval<'t, S: Scalar>(
            &self,
            _tape: &'t Tape<S>,
            p: &Binder<'t, S>,
            x: &[Var<'t, S>],
        ) -> Var<'t, S> {
            (p.var(0) * x[0]).exp()
        }
    }

    fn store_with(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        let mut it = values.iter();
        s.alloc("theta", values.len(), 1, move || *it.next().unwrap());
        s
    }

    #[test]
    fn grad_theta_squared_at_three_is_six() {
        struct Sq;
        impl TapeFn for Sq {
            fn eval<'t, S: Scalar>(
                &self,
                _t: &'t Tape<S>,
                p: &Binder<'t, S>,
                _x: &[Var<'t, S>],
            ) -> Var<'t, S> {
                p.var(0).square()
            }
        }
        let store = store_with(&[3.0]);
        let (v, g) = grad(&Sq, &store, &[]).unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(g, alloc::vec![6.0]);
    }

    #[test]
    fn directional_derivative_of_theta_x_squared() {
        let store = store_with(&[1.0]);
        let (v, t) = directional_deriv(&ThetaXSquared, &store, &[3.0], 0).unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(t, 6.0);
    }

    #[test]
    fn grad_of_directional_matches_hand_derivative() {
        // f = theta x^2, df/dx = 2 theta x, d/dtheta of that = 2x = 6 at x=3.
        let store = store_with(&[1.7]);
        let g = grad_of_directional(&ThetaXSquared, &store, &[3.0], 0).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-14);
    }

    #[test]
    fn grad_of_directional_exp_frozen_value() {
        // f = exp(theta x): d/dtheta df/dx = e^{theta x}(1 + theta x) = 1
        // at theta = 0, x = 2.
        let store = store_with(&[0.0]);
        let g = grad_of_directional(&ExpThetaX, &store, &[2.0], 0).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn out_of_range_direction_is_an_error() {
        let store = store_with(&[1.0]);
        let err = directional_deriv(&ThetaXSquared, &store, &[3.0], 1).unwrap_err();
        assert_eq!(err, Error::IndexOutOfRange { index: 1, dim: 1 });
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let store = store_with(&[1.0]);
        let err = grad(&ThetaXSquared, &store, &[f64::NAN]).unwrap_err();
        assert_eq!(err, Error::NonFiniteInput { what: "grad input" });
    }
}
