//! Likelihood-trained autoregressive baseline.
//!
//! Same masked context network as the score model, but the head maps each
//! context block to `(mean, log sigma)` of a Gaussian conditional, so the
//! joint density is exactly normalized: maximum likelihood training and
//! exact ancestral sampling both work. Its conditional scores are linear in
//! `x_d`, which is the structural weakness the score models don't share.

use alloc::vec::Vec;

use super::{ModelGraphs, ScoreField};
use crate::ad::{Binder, NumericParams, ParamStore, ParamView, Scalar, Tape, Value, Var};
use crate::data::{Batch, Rng};
use crate::math::{self, LN_2PI};
use crate::net::{MadeNet, Mlp};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct TractableArModel {
    made: MadeNet,
    head: Mlp,
    store: ParamStore,
    dim: usize,
    ctx_dim: usize,
}

impl TractableArModel {
    pub fn new(
        dim: usize,
        ctx_dim: usize,
        made_hidden: &[usize],
        head_hidden: &[usize],
        rng: &mut Rng,
    ) -> TractableArModel {
        let mut store = ParamStore::new();
        let made = MadeNet::new(&mut store, "ctx", dim, 0, made_hidden, ctx_dim, rng);
        let head = Mlp::new(&mut store, "head", ctx_dim, head_hidden, 2, rng);
        TractableArModel {
            made,
            head,
            store,
            dim,
            ctx_dim,
        }
    }

    /// Width-matched twin of the score models; see
    /// [`ArCsmModel::with_param_budget`](super::ArCsmModel::with_param_budget).
    pub fn with_param_budget(
        dim: usize,
        ctx_dim: usize,
        head_hidden: &[usize],
        budget: usize,
        rng: &mut Rng,
    ) -> TractableArModel {
        let mut best_w = 1;
        let mut best_err = usize::MAX;
        let mut w = 1;
        loop {
            let mut probe = Rng::stream(0, "budget-probe", w as u64);
            let count =
                TractableArModel::new(dim, ctx_dim, &[w, w], head_hidden, &mut probe).param_count();
            let err = count.abs_diff(budget);
            if err < best_err {
                best_err = err;
                best_w = w;
            }
            if count >= budget || w >= 4096 {
                break;
            }
            w += 1;
        }
        TractableArModel::new(dim, ctx_dim, &[best_w, best_w], head_hidden, rng)
    }

    pub fn param_count(&self) -> usize {
        self.store.len()
    }

    /// `(mean_d, log sigma_d)` for every dimension, generic over the value
    /// algebra so the graph and numeric paths cannot drift apart.
    fn heads<V: Value>(&self, pv: &impl ParamView<V>, x: &[V], out: &mut Vec<(V, V)>) {
        let mut ctxs: Vec<V> = Vec::new();
        self.made.context(pv, x, &[], &mut ctxs);
        let mut pair: Vec<V> = Vec::with_capacity(2);
        out.clear();
        for d in 0..self.dim {
            self.head
                .eval(pv, &ctxs[d * self.ctx_dim..(d + 1) * self.ctx_dim], &mut pair);
            out.push((pair[0], pair[1]));
        }
    }

    fn log_density_value<V: Value>(&self, pv: &impl ParamView<V>, x: &[V]) -> V {
        let mut heads = Vec::new();
        self.heads(pv, x, &mut heads);
        let mut terms = Vec::with_capacity(self.dim);
        for (d, &(mu, rho)) in heads.iter().enumerate() {
            let z = (x[d] - mu) * (-rho).exp();
            terms.push(z.square() * (-0.5) - rho - 0.5 * LN_2PI);
        }
        Value::sum(&terms)
    }

    /// Exact joint log density (normalized).
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.validate(x, 0)?;
        let pv = NumericParams::<f64>::new(&self.store);
        Ok(self.log_density_value(&pv, x))
    }

    /// Mean negative log likelihood over a batch, in nats.
    pub fn nll(&self, batch: &Batch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut acc = 0.0;
        for i in 0..batch.len() {
            acc -= self.log_density(batch.row(i))?;
        }
        Ok(acc / batch.len() as f64)
    }

    /// Exact ancestral sampling: each conditional is Gaussian.
    pub fn sample_into(&self, n: usize, rng: &mut Rng) -> Batch {
        let pv = NumericParams::<f64>::new(&self.store);
        let mut out = Batch::zeros(n, self.dim);
        let mut x = alloc::vec![0.0; self.dim];
        let mut ctxs: Vec<f64> = Vec::new();
        let mut pair: Vec<f64> = Vec::new();
        for i in 0..n {
            x.fill(0.0);
            for d in 0..self.dim {
                self.made.context(&pv, &x, &[], &mut ctxs);
                self.head
                    .eval(&pv, &ctxs[d * self.ctx_dim..(d + 1) * self.ctx_dim], &mut pair);
                x[d] = pair[0] + math::exp(pair[1]) * rng.normal();
            }
            out.row_mut(i).copy_from_slice(&x);
        }
        out
    }
}

impl ScoreField for TractableArModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_split(&self, ctx: &[f64], x_d: f64, d: usize) -> Result<f64> {
        Ok(self.score_xderiv_split(ctx, x_d, d)?.0)
    }

    fn score_xderiv_split(&self, ctx: &[f64], x_d: f64, d: usize) -> Result<(f64, f64)> {
        let pv = NumericParams::<f64>::new(&self.store);
        let mut heads = Vec::new();
        self.heads(&pv, ctx, &mut heads);
        let (mu, rho) = heads[d];
        let inv_var = math::exp(-2.0 * rho);
        Ok(((mu - x_d) * inv_var, -inv_var))
    }
}

impl ModelGraphs for TractableArModel {
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
        let mut heads = Vec::new();
        self.heads(params, ctx, &mut heads);
        out.clear();
        for (d, &(mu, rho)) in heads.iter().enumerate() {
            let inv_var = (rho * (-2.0)).exp();
            out.push((mu - head[d]) * inv_var);
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
        Ok(self.log_density_value(params, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdcheck;

    fn model(dim: usize) -> TractableArModel {
        let mut rng = Rng::stream(11, "init", dim as u64);
        TractableArModel::new(dim, 3, &[10, 10], &[6], &mut rng)
    }

    #[test]
    fn graph_and_numeric_densities_agree() {
        let m = model(3);
        let x = [0.2, -0.9, 0.5];
        let tape = Tape::<f64>::new();
        let binder = Binder::bind(&tape, ModelGraphs::params(&m));
        let vars: Vec<_> = x.iter().map(|&v| tape.leaf(v)).collect();
        let ld = m.log_density_graph(&tape, &binder, &vars).unwrap();
        assert!((ld.value() - m.log_density(&x).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn last_dimension_score_is_the_joint_partial() {
        // No later conditional depends on the last coordinate, so the
        // conditional score there equals d ln p / d x_last.
        let m = model(3);
        let x = [0.4, 0.3, -0.2];
        let s = m.conditional_score(&x, 2).unwrap();
        let fd = fdcheck::fd_partial(|y| m.log_density(y).unwrap(), &x, 2, fdcheck::FD_STEP);
        assert!((s - fd).abs() < 1e-6 * (1.0 + s.abs()), "{s} vs {fd}");
    }

    #[test]
    fn scores_ignore_later_coordinates() {
        let m = model(4);
        let x = [0.1, 0.2, 0.3, 0.4];
        for d in 0..4 {
            let s = m.conditional_score(&x, d).unwrap();
            let mut xp = x;
            for j in d..4 {
                xp[j] = 9.0;
            }
            assert_eq!(s, m.score_split(&xp, x[d], d).unwrap());
        }
    }

    #[test]
    fn graph_scores_match_numeric_scores() {
        let m = model(3);
        let x = [-0.3, 0.8, 0.1];
        let tape = Tape::<f64>::new();
        let binder = Binder::bind(&tape, ModelGraphs::params(&m));
        let vars: Vec<_> = x.iter().map(|&v| tape.leaf(v)).collect();
        let mut scores = Vec::new();
        m.scores_graph(&tape, &binder, &vars, &vars, &[], &mut scores)
            .unwrap();
        let want = m.score_all(&x).unwrap();
        for d in 0..3 {
            assert!((scores[d].value() - want[d]).abs() < 1e-13);
        }
    }

    #[test]
    fn one_dimensional_samples_match_the_stated_conditional() {
        // For dim 1 the context is constant, so the model is a fixed
        // Gaussian whose parameters we can read off and test against.
        let mut rng = Rng::stream(11, "init", 77);
        let m = TractableArModel::new(1, 3, &[8], &[6], &mut rng);
        let pv = NumericParams::<f64>::new(&m.store);
        let mut heads = Vec::new();
        m.heads(&pv, &[0.0], &mut heads);
        let (mu, rho) = heads[0];
        let sigma = math::exp(rho);

        let mut srng = Rng::stream(11, "samples", 0);
        let b = m.sample_into(20_000, &mut srng);
        let col: Vec<f64> = (0..b.len()).map(|i| b.row(i)[0]).collect();
        let (mean, var) = math::mean_var(&col);
        assert!((mean - mu).abs() < 4.0 * sigma / 140.0, "mean {mean} vs {mu}");
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05);

        // And the normalized density integrates to one.
        let mass = fdcheck::trapezoid(
            |y| math::exp(m.log_density(&[y]).unwrap()),
            mu - 8.0 * sigma,
            mu + 8.0 * sigma,
            4000,
        );
        assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
    }
}
