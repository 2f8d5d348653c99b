//! Unnormalized joint energy model: a plain MLP from `x` to a scalar log
//! density (up to an additive constant). Score matching on the joint is the
//! natural objective here, and the per-coordinate curvature it needs makes
//! this the model whose training cost scales worst with dimension.

use crate::ad::{Binder, NumericParams, ParamStore, Scalar, Tape, Var};
use crate::data::Rng;
use crate::net::Mlp;
use crate::{Error, Result};

use super::ModelGraphs;

#[derive(Debug, Clone)]
pub struct EnergyModel {
    mlp: Mlp,
    store: ParamStore,
    dim: usize,
}

impl EnergyModel {
    pub fn new(dim: usize, hidden: &[usize], rng: &mut Rng) -> EnergyModel {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "energy", dim, hidden, 1, rng);
        EnergyModel { mlp, store, dim }
    }

    /// Two equal hidden layers sized to land near `budget` parameters.
    pub fn with_param_budget(dim: usize, budget: usize, rng: &mut Rng) -> EnergyModel {
        // Layer stack dim -> w -> w -> 1 has w(dim+1) + w(w+1) + w + 1
        // parameters; pick the closest of the two widths bracketing budget.
        let count = |w: usize| w * (dim + 1) + w * (w + 1) + w + 1;
        let mut w = 1;
        while count(w) < budget && w < 4096 {
            w += 1;
        }
        if w > 1 && budget.abs_diff(count(w - 1)) < count(w).abs_diff(budget) {
            w -= 1;
        }
        EnergyModel::new(dim, &[w, w], rng)
    }

    pub fn param_count(&self) -> usize {
        self.store.len()
    }

    /// Unnormalized log density on plain floats.
    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "energy input",
                expected: self.dim,
                got: x.len(),
            });
        }
        let pv = NumericParams::<f64>::new(&self.store);
        Ok(self.mlp.eval_scalar(&pv, x))
    }
}

impl ModelGraphs for EnergyModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
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
        Ok(self.mlp.eval_scalar(params, x))
    }
}

#[cfg(test)]
mod tests {
    use alloc::vec::Vec;

    use super::*;
    use crate::fdcheck;

    #[test]
    fn tape_gradient_matches_finite_differences() {
        let mut rng = Rng::stream(3, "init", 0);
        let m = EnergyModel::new(3, &[9, 9], &mut rng);
        let x = [0.4, -0.8, 0.15];
        let tape = Tape::<f64>::new();
        let binder = Binder::bind(&tape, m.params());
        let vars: Vec<_> = x.iter().map(|&v| tape.leaf(v)).collect();
        let ld = m.log_density_graph(&tape, &binder, &vars).unwrap();
        assert!((ld.value() - m.energy(&x).unwrap()).abs() < 1e-14);
        let adj = tape.backward(ld);
        let fd = fdcheck::fd_grad(|y| m.energy(y).unwrap(), &x, fdcheck::FD_STEP);
        for d in 0..3 {
            assert!(
                (adj.of(vars[d]) - fd[d]).abs() < 1e-6 * (1.0 + fd[d].abs()),
                "dim {d}"
            );
        }
    }

    #[test]
    fn budget_constructor_lands_near_the_budget() {
        let mut rng = Rng::stream(3, "init", 1);
        let m = EnergyModel::with_param_budget(10, 40_000, &mut rng);
        let got = m.param_count();
        assert!(got.abs_diff(40_000) < 4_000, "got {got}");
    }

    #[test]
    fn conditional_scores_are_not_available() {
        let mut rng = Rng::stream(3, "init", 2);
        let m = EnergyModel::new(2, &[4], &mut rng);
        let tape = Tape::<f64>::new();
        let binder = Binder::bind(&tape, m.params());
        let vars: Vec<_> = [0.0, 0.0].iter().map(|&v| tape.leaf(v)).collect();
        let mut out = Vec::new();
        assert!(m
            .scores_graph(&tape, &binder, &vars, &vars, &[], &mut out)
            .is_err());
    }
}
