//! Analytic Gaussian score fields.
//!
//! For `x ~ N(mu, Sigma)` every conditional `p(x_d | x_{<d})` is Gaussian
//! with mean and variance read off the Cholesky factor, so the conditional
//! score is available in closed form. These fields are the ground truth the
//! learned models are measured against, and `annealed_gaussian_oracle` gives
//! the population-optimal field for noise-perturbed training: context
//! observed under the reference noise level, head under the stage level.

use alloc::vec;
use alloc::vec::Vec;

use super::{AnnealedScoreSource, DimHead, ModelGraphs, ScoreField};
use crate::ad::{Binder, ParamStore, Scalar, Tape, Value, Var};
use crate::data::NoiseSchedule;
use crate::math::{self, Chol, LN_2PI};
use crate::{Error, Result};

#[derive(Debug, Clone)]
enum Kind {
    Iso { var: f64 },
    Diag { var: Vec<f64> },
    Full { cov: Vec<f64>, chol: Chol },
}

/// Multivariate normal with exact conditional scores and log density.
#[derive(Debug, Clone)]
pub struct GaussianField {
    mean: Vec<f64>,
    kind: Kind,
    store: ParamStore,
}

impl GaussianField {
    pub fn standard(dim: usize) -> GaussianField {
        GaussianField {
            mean: vec![0.0; dim],
            kind: Kind::Iso { var: 1.0 },
            store: ParamStore::new(),
        }
    }

    pub fn iso(mean: Vec<f64>, sigma: f64) -> Result<GaussianField> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidCovariance);
        }
        Ok(GaussianField {
            mean,
            kind: Kind::Iso { var: sigma * sigma },
            store: ParamStore::new(),
        })
    }

    pub fn diag(mean: Vec<f64>, var: Vec<f64>) -> Result<GaussianField> {
        if var.len() != mean.len() || !var.iter().all(|&v| v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidCovariance);
        }
        Ok(GaussianField {
            mean,
            kind: Kind::Diag { var },
            store: ParamStore::new(),
        })
    }

    /// Dense row-major covariance; must be symmetric positive definite.
    pub fn full(mean: Vec<f64>, cov: Vec<f64>) -> Result<GaussianField> {
        let dim = mean.len();
        if cov.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                what: "covariance matrix",
                expected: dim * dim,
                got: cov.len(),
            });
        }
        let chol = Chol::factor(&cov, dim).ok_or(Error::InvalidCovariance)?;
        Ok(GaussianField {
            mean,
            kind: Kind::Full { cov, chol },
            store: ParamStore::new(),
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Materialized dense covariance.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.mean.len();
        match &self.kind {
            Kind::Iso { var } => {
                let mut c = vec![0.0; d * d];
                for i in 0..d {
                    c[i * d + i] = *var;
                }
                c
            }
            Kind::Diag { var } => {
                let mut c = vec![0.0; d * d];
                for i in 0..d {
                    c[i * d + i] = var[i];
                }
                c
            }
            Kind::Full { cov, .. } => cov.clone(),
        }
    }

    /// The field for `x + sigma * eps`, `eps ~ N(0, I)`.
    pub fn smoothed(&self, sigma: f64) -> Result<GaussianField> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidCovariance);
        }
        let s2 = sigma * sigma;
        match &self.kind {
            Kind::Iso { var } => GaussianField::iso(self.mean.clone(), math::sqrt(var + s2)),
            Kind::Diag { var } => {
                GaussianField::diag(self.mean.clone(), var.iter().map(|v| v + s2).collect())
            }
            Kind::Full { cov, .. } => {
                let d = self.mean.len();
                let mut c = cov.clone();
                for i in 0..d {
                    c[i * d + i] += s2;
                }
                GaussianField::full(self.mean.clone(), c)
            }
        }
    }

    /// Implicit lower-triangular factor entry (diagonal sqrt for iso/diag).
    fn l_at(&self, r: usize, c: usize) -> f64 {
        match &self.kind {
            Kind::Iso { var } => {
                if r == c {
                    math::sqrt(*var)
                } else {
                    0.0
                }
            }
            Kind::Diag { var } => {
                if r == c {
                    math::sqrt(var[r])
                } else {
                    0.0
                }
            }
            Kind::Full { chol, .. } => chol.at(r, c),
        }
    }

    /// Mean and variance of `x_d | x_{<d}`; context entries at `>= d` are
    /// ignored.
    pub fn conditional_mean_var(&self, ctx: &[f64], d: usize) -> (f64, f64) {
        match &self.kind {
            Kind::Iso { var } => (self.mean[d], *var),
            Kind::Diag { var } => (self.mean[d], var[d]),
            Kind::Full { chol, .. } => {
                // Progressive whitening of the prefix: z = L^{-1}(ctx - mu).
                let mut z = Vec::with_capacity(d);
                for j in 0..d {
                    let mut s = ctx[j] - self.mean[j];
                    for (k, zk) in z.iter().enumerate() {
                        s -= chol.at(j, k) * zk;
                    }
                    z.push(s / chol.at(j, j));
                }
                let mut m = self.mean[d];
                for (j, zj) in z.iter().enumerate() {
                    m += chol.at(d, j) * zj;
                }
                let l = chol.at(d, d);
                (m, l * l)
            }
        }
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        ScoreField::validate(self, x, 0)?;
        let d = self.mean.len();
        let mut quad = 0.0;
        let mut half_logdet = 0.0;
        match &self.kind {
            Kind::Full { chol, .. } => {
                let mut z: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
                chol.forward_solve(&mut z);
                quad = z.iter().map(|v| v * v).sum();
                half_logdet = chol.half_logdet();
            }
            _ => {
                for i in 0..d {
                    let l = self.l_at(i, i);
                    let zi = (x[i] - self.mean[i]) / l;
                    quad += zi * zi;
                    half_logdet += math::ln(l);
                }
            }
        }
        Ok(-0.5 * quad - half_logdet - 0.5 * d as f64 * LN_2PI)
    }

    /// Whitening recurrence on tape variables, skipping zero coefficients.
    fn whiten_graph<'t, S: Scalar>(&self, x: &[Var<'t, S>]) -> Vec<Var<'t, S>> {
        let mut z: Vec<Var<'t, S>> = Vec::with_capacity(x.len());
        for j in 0..x.len() {
            let mut acc = x[j] - self.mean[j];
            for (k, &zk) in z.iter().enumerate() {
                let c = self.l_at(j, k);
                if c != 0.0 {
                    acc = acc - zk * c;
                }
            }
            z.push(acc * (1.0 / self.l_at(j, j)));
        }
        z
    }
}

impl ScoreField for GaussianField {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn score_split(&self, ctx: &[f64], x_d: f64, d: usize) -> Result<f64> {
        let (m, v) = self.conditional_mean_var(ctx, d);
        Ok((m - x_d) / v)
    }

    fn score_xderiv_split(&self, ctx: &[f64], x_d: f64, d: usize) -> Result<(f64, f64)> {
        let (m, v) = self.conditional_mean_var(ctx, d);
        Ok(((m - x_d) / v, -1.0 / v))
    }

    fn score_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.validate(x, 0)?;
        match &self.kind {
            Kind::Full { chol, .. } => {
                // One whitening pass: x_d - m_d = L_dd z_d.
                let mut z: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
                chol.forward_solve(&mut z);
                Ok((0..self.mean.len()).map(|d| -z[d] / chol.at(d, d)).collect())
            }
            _ => (0..self.mean.len())
                .map(|d| self.score_split(x, x[d], d))
                .collect(),
        }
    }

    fn dim_head<'a>(&'a self, ctx: &[f64], d: usize) -> Result<DimHead<'a>> {
        self.validate(ctx, d)?;
        let (m, v) = self.conditional_mean_var(ctx, d);
        Ok(alloc::boxed::Box::new(move |x_d| (m - x_d) / v))
    }
}

impl ModelGraphs for GaussianField {
    fn dim(&self) -> usize {
        self.mean.len()
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
        _params: &Binder<'t, S>,
        ctx: &[Var<'t, S>],
        head: &[Var<'t, S>],
        cond: &[Var<'t, S>],
        out: &mut Vec<Var<'t, S>>,
    ) -> Result<()> {
        let dim = self.mean.len();
        if ctx.len() != dim || head.len() != dim || !cond.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "score graph inputs",
                expected: dim,
                got: ctx.len().min(head.len()),
            });
        }
        let z = match &self.kind {
            Kind::Full { .. } => self.whiten_graph(ctx),
            _ => Vec::new(),
        };
        out.clear();
        for d in 0..dim {
            // m_d - x_d, with m_d = mu_d + sum_j L_dj z_j.
            let mut t = head[d] * (-1.0) + self.mean[d];
            for (j, &zj) in z.iter().enumerate().take(d) {
                let c = self.l_at(d, j);
                if c != 0.0 {
                    t = t + zj * c;
                }
            }
            let l = self.l_at(d, d);
            out.push(t * (1.0 / (l * l)));
        }
        Ok(())
    }

    fn log_density_graph<'t, S: Scalar>(
        &self,
        _tape: &'t Tape<S>,
        _params: &Binder<'t, S>,
        x: &[Var<'t, S>],
    ) -> Result<Var<'t, S>> {
        let dim = self.mean.len();
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "log density inputs",
                expected: dim,
                got: x.len(),
            });
        }
        let z = self.whiten_graph(x);
        let z2: Vec<Var<'t, S>> = z.iter().map(|v| v.square()).collect();
        let quad = Value::sum(&z2);
        let mut half_logdet = 0.0;
        for d in 0..dim {
            half_logdet += math::ln(self.l_at(d, d));
        }
        Ok(quad * (-0.5) - (half_logdet + 0.5 * dim as f64 * LN_2PI))
    }
}

// ── smoothed stage conditionals ──────────────────────────────────────────

/// Conditional score of a jointly Gaussian (context, head) pair: the context
/// carries reference-level noise, the head carries stage-level noise. Linear
/// weights and the residual variance are precomputed per dimension.
#[derive(Debug, Clone)]
pub struct SmoothedStageField {
    mean: Vec<f64>,
    weights: Vec<Vec<f64>>,
    vars: Vec<f64>,
}

impl SmoothedStageField {
    pub fn mean_var(&self, ctx: &[f64], d: usize) -> (f64, f64) {
        let mut m = self.mean[d];
        for (j, w) in self.weights[d].iter().enumerate() {
            m += w * (ctx[j] - self.mean[j]);
        }
        (m, self.vars[d])
    }
}

impl ScoreField for SmoothedStageField {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn score_split(&self, ctx: &[f64], x_d: f64, d: usize) -> Result<f64> {
        let (m, v) = self.mean_var(ctx, d);
        Ok((m - x_d) / v)
    }

    fn score_xderiv_split(&self, ctx: &[f64], x_d: f64, d: usize) -> Result<(f64, f64)> {
        let (m, v) = self.mean_var(ctx, d);
        Ok(((m - x_d) / v, -1.0 / v))
    }

    fn dim_head<'a>(&'a self, ctx: &[f64], d: usize) -> Result<DimHead<'a>> {
        self.validate(ctx, d)?;
        let (m, v) = self.mean_var(ctx, d);
        Ok(alloc::boxed::Box::new(move |x_d| (m - x_d) / v))
    }
}

/// One [`SmoothedStageField`] per noise level, widest first.
pub struct AnnealedGaussianOracle {
    dim: usize,
    fields: Vec<SmoothedStageField>,
}

impl AnnealedGaussianOracle {
    pub fn stage(&self, i: usize) -> &SmoothedStageField {
        &self.fields[i]
    }
}

impl AnnealedScoreSource for AnnealedGaussianOracle {
    fn dim(&self) -> usize {
        self.dim
    }
    fn stages(&self) -> usize {
        self.fields.len()
    }
    fn stage_field(&self, stage: usize) -> &dyn ScoreField {
        &self.fields[stage]
    }
}

/// Population-optimal stage fields for `field` under the schedule: at stage
/// `i` the head sees noise `sigma_i` while the context always sees
/// `sigma_ref`. Weights solve the ridge system
/// `(Sigma_{<d} + sigma_ref^2 I) w = Sigma_{<d, d}` per dimension.
pub fn annealed_gaussian_oracle(
    field: &GaussianField,
    schedule: &NoiseSchedule,
    sigma_ref: f64,
) -> Result<AnnealedGaussianOracle> {
    let dim = ScoreField::dim(field);
    let cov = field.covariance();
    let ref2 = sigma_ref * sigma_ref;
    let mut fields = Vec::with_capacity(schedule.len());
    for i in 0..schedule.len() {
        let s2 = schedule.sigma(i) * schedule.sigma(i);
        let mut weights = Vec::with_capacity(dim);
        let mut vars = Vec::with_capacity(dim);
        for d in 0..dim {
            let mut w = vec![0.0; d];
            let mut v = cov[d * dim + d] + s2;
            if d > 0 {
                let mut a = vec![0.0; d * d];
                for r in 0..d {
                    for c in 0..d {
                        a[r * d + c] = cov[r * dim + c];
                    }
                    a[r * d + r] += ref2;
                }
                let chol = Chol::factor(&a, d).ok_or(Error::InvalidCovariance)?;
                for (j, wj) in w.iter_mut().enumerate() {
                    *wj = cov[j * dim + d];
                }
                let rhs = w.clone();
                chol.solve(&mut w);
                for j in 0..d {
                    v -= w[j] * rhs[j];
                }
            }
            if !(v > 0.0) {
                return Err(Error::InvalidCovariance);
            }
            weights.push(w);
            vars.push(v);
        }
        fields.push(SmoothedStageField {
            mean: field.mean().to_vec(),
            weights,
            vars,
        });
    }
    Ok(AnnealedGaussianOracle { dim, fields })
}
