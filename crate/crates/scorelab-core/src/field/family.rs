//! One-parameter model family: zero-mean isotropic Gaussian with learnable
//! scale. Small enough that the population optimum of every objective is
//! known, which makes it the standard check that a training loop actually
//! recovers what it should.

use alloc::vec::Vec;

use super::{ModelGraphs, ScoreField};
use crate::ad::{Binder, ParamStore, Scalar, Tape, Value, Var};
use crate::math::{self, LN_2PI};
use crate::{Error, Result};

/// `N(0, sigma^2 I)` with `sigma = exp(t)`; the log parameterization keeps
/// the scale positive under unconstrained gradient steps.
#[derive(Debug, Clone)]
pub struct GaussianScaleFamily {
    store: ParamStore,
    dim: usize,
}

impl GaussianScaleFamily {
    pub fn new(dim: usize, sigma_init: f64) -> Result<GaussianScaleFamily> {
        if !(sigma_init > 0.0) || !sigma_init.is_finite() {
            return Err(Error::InvalidArgument {
                what: alloc::string::String::from("initial scale must be positive"),
            });
        }
        let mut store = ParamStore::new();
        store.alloc("log_sigma", 1, 1, || math::ln(sigma_init));
        Ok(GaussianScaleFamily { store, dim })
    }

    pub fn fitted_sigma(&self) -> f64 {
        math::exp(self.store.values()[0])
    }
}

impl ScoreField for GaussianScaleFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_split(&self, _ctx: &[f64], x_d: f64, _d: usize) -> Result<f64> {
        let t = self.store.values()[0];
        Ok(-x_d * math::exp(-2.0 * t))
    }

    fn score_xderiv_split(&self, _ctx: &[f64], x_d: f64, _d: usize) -> Result<(f64, f64)> {
        let inv_var = math::exp(-2.0 * self.store.values()[0]);
        Ok((-x_d * inv_var, -inv_var))
    }
}

impl ModelGraphs for GaussianScaleFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn scores_graph<'t, S: Scalar>(
        &self,
        _tape: &'t Tape<S>,
        params: &Binder<'t, S>,
        ctx: &[Var<'t, S>],
        head: &[Var<'t, S>],
        cond: &[Var<'t, S>],
        out: &mut Vec<Var<'t, S>>,
    ) -> Result<()> {
        if ctx.len() != self.dim || head.len() != self.dim || !cond.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "score graph inputs",
                expected: self.dim,
                got: ctx.len().min(head.len()),
            });
        }
        let t = params.var(0);
        let inv_var = (t * (-2.0)).exp();
        out.clear();
        for d in 0..self.dim {
            out.push(head[d] * (-1.0) * inv_var);
        }
        Ok(())
    }

    fn log_density_graph<'t, S: Scalar>(
        &self,
        _tape: &'t Tape<S>,
        params: &Binder<'t, S>,
        x: &[Var<'t, S>],
    ) -> Result<Var<'t, S>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "log density inputs",
                expected: self.dim,
                got: x.len(),
            });
        }
        let t = params.var(0);
        let inv_var = (t * (-2.0)).exp();
        let mut terms = Vec::with_capacity(self.dim);
        for &xd in x {
            terms.push(xd.square() * (-0.5) * inv_var - t - 0.5 * LN_2PI);
        }
        Ok(Value::sum(&terms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdcheck;

    #[test]
    fn graph_scores_match_numeric_scores() {
        let fam = GaussianScaleFamily::new(2, 0.7).unwrap();
        let x = [0.5, -1.2];
        let tape = Tape::<f64>::new();
        let binder = Binder::bind(&tape, ModelGraphs::params(&fam));
        let vars: Vec<_> = x.iter().map(|&v| tape.leaf(v)).collect();
        let mut scores = Vec::new();
        fam.scores_graph(&tape, &binder, &vars, &vars, &[], &mut scores)
            .unwrap();
        for d in 0..2 {
            let want = fam.conditional_score(&x, d).unwrap();
            assert!((scores[d].value() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn scale_gradient_matches_finite_difference() {
        let mut fam = GaussianScaleFamily::new(2, 1.3).unwrap();
        let x = [0.4, 0.9];
        let tape = Tape::<f64>::new();
        let binder = Binder::bind(&tape, ModelGraphs::params(&fam));
        let vars: Vec<_> = x.iter().map(|&v| tape.leaf(v)).collect();
        let ld = fam.log_density_graph(&tape, &binder, &vars).unwrap();
        let adj = tape.backward(ld);
        let mut grad = [0.0];
        binder.collect_adjoints(&adj, |s| s, &mut grad);

        let t0 = fam.store.values()[0];
        let fd = fdcheck::fd_partial(
            |t| {
                fam.params_mut().values_mut()[0] = t[0];
                let tape = Tape::<f64>::new();
                let binder = Binder::bind(&tape, ModelGraphs::params(&fam));
                let vars: Vec<_> = x.iter().map(|&v| tape.leaf(v)).collect();
                fam.log_density_graph(&tape, &binder, &vars).unwrap().value()
            },
            &[t0],
            0,
            fdcheck::FD_STEP,
        );
        assert!((grad[0] - fd).abs() < 1e-6, "{} vs {}", grad[0], fd);
    }
}
