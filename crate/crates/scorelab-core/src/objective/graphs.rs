//! Tape passes behind the objectives.
//!
//! One tape carries a whole minibatch, so each pass pays a single reverse
//! sweep. Parameter gradients of the derivative-bearing losses come from
//! seeding each output with the right forward-mode scalar and reading the
//! highest slot of the parameter adjoints:
//!
//! - composite: scores are recorded over dual numbers with the head leaf
//!   seeded; seeding score `s` with the dual `(1/N, s/N)` makes the tangent
//!   slot of a parameter adjoint the parameter's derivative of
//!   `mean(s^2/2 + s')`.
//! - exact/sliced: the log density is recorded over second-order jets with
//!   leaves seeded along a coordinate or projection direction; seeding the
//!   density `phi` with `(w, w*phi'/2, 0)` makes the second-order slot the
//!   derivative of `w * (phi'^2/2 + phi'')` summed over outputs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::ad::{Binder, Dual, Jet2, Tape, Var};
use crate::data::{Batch, Rng};
use crate::field::ModelGraphs;
use crate::{Error, Result};

/// Checks that batch rows fit the model's `[conditioning | sample]` layout
/// and returns the conditioning width. Density objectives reject conditional
/// models: their log density is over the sample alone.
fn layout<M: ModelGraphs + ?Sized>(model: &M, batch: &Batch, density: bool) -> Result<usize> {
    let cd = model.cond_dim();
    if density && cd != 0 {
        return Err(Error::Unsupported {
            what: "joint log density of a conditional model",
        });
    }
    let expected = cd + model.dim();
    if batch.dim() != expected {
        return Err(Error::DimensionMismatch {
            what: "batch row",
            expected,
            got: batch.dim(),
        });
    }
    Ok(cd)
}

/// Composite loss `mean_i sum_d [ s_d^2/2 + ds_d/dx_d ]`, optionally with the
/// context copy noised at `sigma_hat` and head scalars at `sigma_i`. With
/// zero noise levels the recorded graph is identical to the clean loss.
pub(super) fn composite_pass<M: ModelGraphs + ?Sized>(
    model: &M,
    batch: &Batch,
    mut noise: Option<(f64, f64, &mut Rng)>,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let cd = layout(model, batch, false)?;
    let dim = model.dim();
    let n = batch.len();
    let nf = n as f64;

    let tape: Tape<Dual> = Tape::new();
    let binder = Binder::bind(&tape, model.params());
    let mut seeds: Vec<(Var<'_, Dual>, Dual)> = Vec::new();
    let mut scores: Vec<Var<'_, Dual>> = Vec::with_capacity(dim);
    let mut ctx_vals = vec![0.0; dim];
    let mut head_vals = vec![0.0; dim];
    let mut eps = vec![0.0; 2 * dim];
    let mut loss = 0.0;

    for i in 0..n {
        let (cond_row, x) = batch.row(i).split_at(cd);
        ctx_vals.copy_from_slice(x);
        head_vals.copy_from_slice(x);
        if let Some((sigma_i, sigma_hat, rng)) = noise.as_mut() {
            rng.fill_normal(&mut eps);
            for d in 0..dim {
                ctx_vals[d] = x[d] + *sigma_hat * eps[d];
                head_vals[d] = x[d] + *sigma_i * eps[dim + d];
            }
        }
        let cond: Vec<Var<'_, Dual>> =
            cond_row.iter().map(|&v| tape.leaf(Dual::constant(v))).collect();
        let ctx: Vec<Var<'_, Dual>> =
            ctx_vals.iter().map(|&v| tape.leaf(Dual::constant(v))).collect();
        let head: Vec<Var<'_, Dual>> =
            head_vals.iter().map(|&v| tape.leaf(Dual::seeded(v))).collect();
        scores.clear();
        model.scores_graph(&tape, &binder, &ctx, &head, &cond, &mut scores)?;
        if scores.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "recorded scores",
                expected: dim,
                got: scores.len(),
            });
        }
        for &s in &scores {
            let sv = s.value();
            loss += 0.5 * sv.v * sv.v + sv.t;
            if grad.is_some() {
                seeds.push((s, Dual::new(1.0 / nf, sv.v / nf)));
            }
        }
    }
    if let Some(g) = grad {
        let adj = tape.backward_seeded(&seeds);
        binder.collect_adjoints(&adj, |a| a.t, g);
    }
    Ok(loss / nf)
}

/// Joint-form loss via one jet pass per coordinate: pass `k` seeds leaf `k`
/// and yields `d phi/d x_k` and `d^2 phi/d x_k^2` for every sample.
pub(super) fn exact_pass<M: ModelGraphs + ?Sized>(
    model: &M,
    batch: &Batch,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    layout(model, batch, true)?;
    let dim = model.dim();
    let n = batch.len();
    let nf = n as f64;
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    let mut loss = 0.0;
    for k in 0..dim {
        let tape: Tape<Jet2> = Tape::new();
        let binder = Binder::bind(&tape, model.params());
        let mut seeds: Vec<(Var<'_, Jet2>, Jet2)> = Vec::new();
        for i in 0..n {
            let leaves: Vec<Var<'_, Jet2>> = batch
                .row(i)
                .iter()
                .enumerate()
                .map(|(j, &v)| tape.leaf(Jet2::seeded_dir(v, if j == k { 1.0 } else { 0.0 })))
                .collect();
            let phi = model.log_density_graph(&tape, &binder, &leaves)?;
            let pv = phi.value();
            loss += 0.5 * pv.d1 * pv.d1 + pv.d2;
            if grad.is_some() {
                seeds.push((phi, Jet2::new(1.0 / nf, pv.d1 / (2.0 * nf), 0.0)));
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            let adj = tape.backward_seeded(&seeds);
            binder.accumulate_adjoints(&adj, |a| a.d2, g);
        }
    }
    Ok(loss / nf)
}

/// Sliced loss `mean[ v' hess v + (v' grad)^2 / 2 ]` over Rademacher
/// directions, one jet pass per projection, a fresh direction per sample.
pub(super) fn sliced_pass<M: ModelGraphs + ?Sized>(
    model: &M,
    batch: &Batch,
    n_projections: usize,
    rng: &mut Rng,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    if n_projections == 0 {
        return Err(Error::InvalidArgument {
            what: format!("n_projections must be at least 1, got {n_projections}"),
        });
    }
    layout(model, batch, true)?;
    let n = batch.len();
    let scale = 1.0 / (n as f64 * n_projections as f64);
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    let mut loss = 0.0;
    for _ in 0..n_projections {
        let tape: Tape<Jet2> = Tape::new();
        let binder = Binder::bind(&tape, model.params());
        let mut seeds: Vec<(Var<'_, Jet2>, Jet2)> = Vec::new();
        for i in 0..n {
            let leaves: Vec<Var<'_, Jet2>> = batch
                .row(i)
                .iter()
                .map(|&v| tape.leaf(Jet2::seeded_dir(v, rng.rademacher())))
                .collect();
            let phi = model.log_density_graph(&tape, &binder, &leaves)?;
            let pv = phi.value();
            loss += 0.5 * pv.d1 * pv.d1 + pv.d2;
            if grad.is_some() {
                seeds.push((phi, Jet2::new(scale, pv.d1 * 0.5 * scale, 0.0)));
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            let adj = tape.backward_seeded(&seeds);
            binder.accumulate_adjoints(&adj, |a| a.d2, g);
        }
    }
    Ok(loss * scale)
}

/// Denoising loss: corrupt each row, evaluate every conditional score at the
/// corrupted point, and regress onto `(x - x~)/sigma^2`. Plain first-order
/// tape; the reverse sweep is seeded with the residuals.
pub(super) fn denoising_pass<M: ModelGraphs + ?Sized>(
    model: &M,
    batch: &Batch,
    sigma: f64,
    rng: &mut Rng,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument {
            what: format!("denoising sigma must be positive and finite, got {sigma}"),
        });
    }
    let cd = layout(model, batch, false)?;
    let dim = model.dim();
    let n = batch.len();
    let nf = n as f64;
    let inv = 1.0 / (sigma * sigma);

    let tape: Tape<f64> = Tape::new();
    let binder = Binder::bind(&tape, model.params());
    let mut seeds: Vec<(Var<'_, f64>, f64)> = Vec::new();
    let mut scores: Vec<Var<'_, f64>> = Vec::with_capacity(dim);
    let mut noisy = vec![0.0; dim];
    let mut loss = 0.0;

    for i in 0..n {
        let (cond_row, x) = batch.row(i).split_at(cd);
        rng.fill_normal(&mut noisy);
        for d in 0..dim {
            noisy[d] = x[d] + sigma * noisy[d];
        }
        let cond: Vec<Var<'_, f64>> = cond_row.iter().map(|&v| tape.leaf(v)).collect();
        let leaves: Vec<Var<'_, f64>> = noisy.iter().map(|&v| tape.leaf(v)).collect();
        scores.clear();
        model.scores_graph(&tape, &binder, &leaves, &leaves, &cond, &mut scores)?;
        if scores.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "recorded scores",
                expected: dim,
                got: scores.len(),
            });
        }
        for (d, &s) in scores.iter().enumerate() {
            let r = s.value() - (x[d] - noisy[d]) * inv;
            loss += 0.5 * r * r;
            if grad.is_some() {
                seeds.push((s, r / nf));
            }
        }
    }
    if let Some(g) = grad {
        let adj = tape.backward_seeded(&seeds);
        binder.collect_adjoints(&adj, |a| a, g);
    }
    Ok(loss / nf)
}

/// Mean negative log density on a plain tape.
pub(super) fn nll_pass<M: ModelGraphs + ?Sized>(
    model: &M,
    batch: &Batch,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    layout(model, batch, true)?;
    let n = batch.len();
    let nf = n as f64;
    let tape: Tape<f64> = Tape::new();
    let binder = Binder::bind(&tape, model.params());
    let mut seeds: Vec<(Var<'_, f64>, f64)> = Vec::new();
    let mut loss = 0.0;
    for i in 0..n {
        let leaves: Vec<Var<'_, f64>> = batch.row(i).iter().map(|&v| tape.leaf(v)).collect();
        let phi = model.log_density_graph(&tape, &binder, &leaves)?;
        loss -= phi.value();
        if grad.is_some() {
            seeds.push((phi, -1.0 / nf));
        }
    }
    if let Some(g) = grad {
        let adj = tape.backward_seeded(&seeds);
        binder.collect_adjoints(&adj, |a| a, g);
    }
    Ok(loss / nf)
}
