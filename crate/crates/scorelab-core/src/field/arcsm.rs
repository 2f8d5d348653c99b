//! Learned autoregressive conditional score model.
//!
//! A masked context network maps `x` (and optional conditioning inputs) to
//! one context block per dimension, where block `d` sees `x_{<d}` only. A
//! single shared head maps `(context_d, x_d)` to the scalar conditional
//! score `s_d`. All `D` scores cost one context pass plus `D` cheap head
//! evaluations, and the head input keeps the dependence on `x_d` separate
//! from the dependence on the prefix, which is what the per-dimension
//! objectives and samplers differentiate.

use alloc::boxed::Box;
use alloc::vec::Vec;

use super::{AnnealedScoreSource, DimHead, ModelGraphs, ScoreField};
use crate::ad::{Binder, Dual, NumericParams, ParamStore, Scalar, Tape, Var};
use crate::data::Rng;
use crate::net::{MadeNet, Mlp};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ArCsmModel {
    made: MadeNet,
    head: Mlp,
    store: ParamStore,
    dim: usize,
    cond_dim: usize,
    ctx_dim: usize,
}

impl ArCsmModel {
    pub fn new(
        dim: usize,
        cond_dim: usize,
        ctx_dim: usize,
        made_hidden: &[usize],
        head_hidden: &[usize],
        rng: &mut Rng,
    ) -> ArCsmModel {
        let mut store = ParamStore::new();
        let made = MadeNet::new(&mut store, "ctx", dim, cond_dim, made_hidden, ctx_dim, rng);
        let head = Mlp::new(&mut store, "head", ctx_dim + 1, head_hidden, 1, rng);
        ArCsmModel {
            made,
            head,
            store,
            dim,
            cond_dim,
            ctx_dim,
        }
    }

    /// Two equal hidden layers in the context network, width chosen so the
    /// total parameter count lands as close to `budget` as possible. Keeps
    /// timing and capacity comparisons across methods honest.
    pub fn with_param_budget(
        dim: usize,
        cond_dim: usize,
        ctx_dim: usize,
        head_hidden: &[usize],
        budget: usize,
        rng: &mut Rng,
    ) -> ArCsmModel {
        let count_for = |w: usize| {
            let mut probe = Rng::stream(0, "budget-probe", w as u64);
            ArCsmModel::new(dim, cond_dim, ctx_dim, &[w, w], head_hidden, &mut probe)
                .param_count()
        };
        let w = width_for_budget(budget, count_for);
        ArCsmModel::new(dim, cond_dim, ctx_dim, &[w, w], head_hidden, rng)
    }

    pub fn ctx_dim(&self) -> usize {
        self.ctx_dim
    }

    pub fn param_count(&self) -> usize {
        self.store.len()
    }

    /// All context blocks at `x` as plain floats, one pass.
    fn contexts_f64(&self, x: &[f64], cond: &[f64], out: &mut Vec<f64>) {
        let pv = NumericParams::<f64>::new(&self.store);
        self.made.context(&pv, x, cond, out);
    }

    fn head_f64(&self, c_d: &[f64], x_d: f64) -> f64 {
        let pv = NumericParams::<f64>::new(&self.store);
        let mut hin = Vec::with_capacity(self.ctx_dim + 1);
        hin.extend_from_slice(c_d);
        hin.push(x_d);
        self.head.eval_scalar(&pv, &hin)
    }

    /// Score and head derivative via a forward dual pass through the head
    /// (the context is constant in `x_d`).
    fn head_dual(&self, c_d: &[f64], x_d: f64) -> (f64, f64) {
        let pv = NumericParams::<Dual>::new(&self.store);
        let mut hin: Vec<Dual> = Vec::with_capacity(self.ctx_dim + 1);
        hin.extend(c_d.iter().map(|&c| Dual::constant(c)));
        hin.push(Dual::seeded(x_d));
        let out = self.head.eval_scalar(&pv, &hin);
        (out.v, out.t)
    }

    /// All conditional scores given conditioning inputs.
    pub fn scores_given(&self, x: &[f64], cond: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim || cond.len() != self.cond_dim {
            return Err(Error::DimensionMismatch {
                what: "scores_given inputs",
                expected: self.dim + self.cond_dim,
                got: x.len() + cond.len(),
            });
        }
        let mut ctxs = Vec::new();
        self.contexts_f64(x, cond, &mut ctxs);
        Ok((0..self.dim)
            .map(|d| self.head_f64(&ctxs[d * self.ctx_dim..(d + 1) * self.ctx_dim], x[d]))
            .collect())
    }

    /// Stage-indexed copies of this model loaded with per-stage parameters,
    /// for annealed sampling.
    pub fn staged(&self, stage_params: &[Vec<f64>]) -> Result<StagedSource<ArCsmModel>> {
        let mut fields = Vec::with_capacity(stage_params.len());
        for p in stage_params {
            let mut m = self.clone();
            m.store.load(p)?;
            fields.push(m);
        }
        Ok(StagedSource { fields })
    }

    fn require_unconditional(&self) -> Result<()> {
        if self.cond_dim != 0 {
            return Err(Error::Unsupported {
                what: "score field access on a conditional model",
            });
        }
        Ok(())
    }
}

fn width_for_budget(budget: usize, count_for: impl Fn(usize) -> usize) -> usize {
    let mut prev = count_for(1);
    if prev >= budget {
        return 1;
    }
    let mut w = 1;
    loop {
        w += 1;
        let c = count_for(w);
        if c >= budget {
            return if c - budget <= budget - prev { w } else { w - 1 };
        }
        prev = c;
        assert!(w < 4096, "parameter budget unreachably large");
    }
}

impl ScoreField for ArCsmModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_split(&self, ctx: &[f64], x_d: f64, d: usize) -> Result<f64> {
        self.require_unconditional()?;
        let mut ctxs = Vec::new();
        self.contexts_f64(ctx, &[], &mut ctxs);
        Ok(self.head_f64(&ctxs[d * self.ctx_dim..(d + 1) * self.ctx_dim], x_d))
    }

    fn score_xderiv_split(&self, ctx: &[f64], x_d: f64, d: usize) -> Result<(f64, f64)> {
        self.require_unconditional()?;
        let mut ctxs = Vec::new();
        self.contexts_f64(ctx, &[], &mut ctxs);
        Ok(self.head_dual(&ctxs[d * self.ctx_dim..(d + 1) * self.ctx_dim], x_d))
    }

    fn score_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require_unconditional()?;
        self.validate(x, 0)?;
        self.scores_given(x, &[])
    }

    fn score_xderiv_all(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.require_unconditional()?;
        self.validate(x, 0)?;
        let mut ctxs = Vec::new();
        self.contexts_f64(x, &[], &mut ctxs);
        let mut s = Vec::with_capacity(self.dim);
        let mut ds = Vec::with_capacity(self.dim);
        for d in 0..self.dim {
            let (a, b) = self.head_dual(&ctxs[d * self.ctx_dim..(d + 1) * self.ctx_dim], x[d]);
            s.push(a);
            ds.push(b);
        }
        Ok((s, ds))
    }

    fn dim_head<'a>(&'a self, ctx: &[f64], d: usize) -> Result<DimHead<'a>> {
        self.require_unconditional()?;
        self.validate(ctx, d)?;
        let mut ctxs = Vec::new();
        self.contexts_f64(ctx, &[], &mut ctxs);
        let c_d: Vec<f64> = ctxs[d * self.ctx_dim..(d + 1) * self.ctx_dim].to_vec();
        let mut hin: Vec<f64> = Vec::with_capacity(self.ctx_dim + 1);
        Ok(Box::new(move |x_d| {
            let pv = NumericParams::<f64>::new(&self.store);
            hin.clear();
            hin.extend_from_slice(&c_d);
            hin.push(x_d);
            self.head.eval_scalar(&pv, &hin)
        }))
    }
}

impl ModelGraphs for ArCsmModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn cond_dim(&self) -> usize {
        self.cond_dim
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
        if ctx.len() != self.dim || head.len() != self.dim || cond.len() != self.cond_dim {
            return Err(Error::DimensionMismatch {
                what: "score graph inputs",
                expected: self.dim,
                got: ctx.len().min(head.len()),
            });
        }
        let mut ctxs: Vec<Var<'t, S>> = Vec::new();
        self.made.context(params, ctx, cond, &mut ctxs);
        let mut hin: Vec<Var<'t, S>> = Vec::with_capacity(self.ctx_dim + 1);
        out.clear();
        for d in 0..self.dim {
            hin.clear();
            hin.extend_from_slice(&ctxs[d * self.ctx_dim..(d + 1) * self.ctx_dim]);
            hin.push(head[d]);
            out.push(self.head.eval_scalar(params, &hin));
        }
        Ok(())
    }
}

/// One score field per noise stage, widest first.
pub struct StagedSource<F: ScoreField> {
    pub fields: Vec<F>,
}

impl<F: ScoreField> AnnealedScoreSource for StagedSource<F> {
    fn dim(&self) -> usize {
        self.fields[0].dim()
    }
    fn stages(&self) -> usize {
        self.fields.len()
    }
    fn stage_field(&self, stage: usize) -> &dyn ScoreField {
        &self.fields[stage]
    }
}
