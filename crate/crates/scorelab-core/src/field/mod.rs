//! Conditional score fields.
//!
//! Two surfaces, one idea. [`ScoreField`] is the numeric face used by
//! samplers, denoisers, and value-only losses: conditional scores
//! `s_d(x_{<d}, x_d)` evaluated on plain floats, with the context (prefix)
//! and the head scalar passed separately because annealed objectives and
//! per-dimension Langevin chains evaluate them at different points.
//! [`ModelGraphs`] is the training face: the same models record their
//! conditional scores (or their joint log density) onto an autodiff tape.

mod arcsm;
mod energy;
mod family;
mod gaussian;
mod tractable;

pub use arcsm::{ArCsmModel, StagedSource};
pub use energy::EnergyModel;
pub use family::GaussianScaleFamily;
pub use gaussian::{annealed_gaussian_oracle, AnnealedGaussianOracle, GaussianField, SmoothedStageField};
pub use tractable::TractableArModel;

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::ad::{Binder, ParamStore, Scalar, Tape, Var};
use crate::{Error, Result};

/// Closure evaluating one dimension's conditional score as a function of the
/// head scalar, with the context held fixed (and precomputed).
pub type DimHead<'a> = Box<dyn FnMut(f64) -> f64 + 'a>;

/// Numeric conditional score field over `dim` dimensions.
pub trait ScoreField {
    fn dim(&self) -> usize;

    /// `s_d(ctx_{<d}, x_d)`: context entries at positions `>= d` are ignored.
    fn score_split(&self, ctx: &[f64], x_d: f64, d: usize) -> Result<f64>;

    /// Score and its derivative in the head scalar.
    fn score_xderiv_split(&self, ctx: &[f64], x_d: f64, d: usize) -> Result<(f64, f64)>;

    /// Validated conditional score at a point.
    fn conditional_score(&self, x: &[f64], d: usize) -> Result<f64> {
        self.validate(x, d)?;
        self.score_split(x, x[d], d)
    }

    /// Validated score plus `d s_d / d x_d`.
    fn conditional_score_xderiv(&self, x: &[f64], d: usize) -> Result<(f64, f64)> {
        self.validate(x, d)?;
        self.score_xderiv_split(x, x[d], d)
    }

    /// All conditional scores at one point. Implementations that share work
    /// across dimensions override this.
    fn score_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.validate(x, 0)?;
        (0..self.dim()).map(|d| self.score_split(x, x[d], d)).collect()
    }

    /// All scores and head derivatives at one point.
    fn score_xderiv_all(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate(x, 0)?;
        let mut s = Vec::with_capacity(self.dim());
        let mut ds = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            let (a, b) = self.score_xderiv_split(x, x[d], d)?;
            s.push(a);
            ds.push(b);
        }
        Ok((s, ds))
    }

    /// Repeated evaluation of dimension `d` with a fixed context: the
    /// returned closure may cache the context pass.
    fn dim_head<'a>(&'a self, ctx: &[f64], d: usize) -> Result<DimHead<'a>> {
        let ctx: Vec<f64> = ctx.to_vec();
        let this = self;
        Ok(Box::new(move |x_d| {
            this.score_split(&ctx, x_d, d).unwrap_or(f64::NAN)
        }))
    }

    /// Sum of conditional scores: large magnitudes flag points the field
    /// considers far from the data.
    fn ood_statistic(&self, x: &[f64]) -> Result<f64> {
        Ok(self.score_all(x)?.iter().sum())
    }

    fn validate(&self, x: &[f64], d: usize) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "score input",
                expected: self.dim(),
                got: x.len(),
            });
        }
        if d >= self.dim() {
            return Err(Error::IndexOutOfRange { index: d, dim: self.dim() });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput { what: "score input" });
        }
        Ok(())
    }
}

/// Training surface: models record their scores (and, where tractable, their
/// joint log density) onto a tape. Context and head variables are separate
/// leaf sets so objectives control what a head-scalar derivative holds fixed;
/// passing the same slice twice recovers the fully-shared evaluation.
pub trait ModelGraphs {
    fn dim(&self) -> usize;
    fn cond_dim(&self) -> usize {
        0
    }
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    /// Record all `D` conditional scores into `out`.
    fn scores_graph<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        params: &Binder<'t, S>,
        ctx: &[Var<'t, S>],
        head: &[Var<'t, S>],
        cond: &[Var<'t, S>],
        out: &mut Vec<Var<'t, S>>,
    ) -> Result<()> {
        let _ = (tape, params, ctx, head, cond, out);
        Err(Error::Unsupported {
            what: "conditional scores for this model",
        })
    }

    /// Record the joint log density (possibly unnormalized).
    fn log_density_graph<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        params: &Binder<'t, S>,
        x: &[Var<'t, S>],
    ) -> Result<Var<'t, S>> {
        let _ = (tape, params, x);
        Err(Error::Unsupported {
            what: "joint log density for this model",
        })
    }
}

/// A family of score fields indexed by noise stage, for annealed samplers.
/// Stage 0 is the widest noise level.
pub trait AnnealedScoreSource {
    fn dim(&self) -> usize;
    fn stages(&self) -> usize;
    fn stage_field(&self, stage: usize) -> &dyn ScoreField;
}

/// The same field at every stage (e.g. a fully trained model reused across
/// the whole schedule, or an analytic stationary target).
pub struct SingleStageSource<'a, F: ScoreField> {
    pub field: &'a F,
    pub stages: usize,
}

impl<'a, F: ScoreField> AnnealedScoreSource for SingleStageSource<'a, F> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn stages(&self) -> usize {
        self.stages
    }
    fn stage_field(&self, _stage: usize) -> &dyn ScoreField {
        self.field
    }
}
