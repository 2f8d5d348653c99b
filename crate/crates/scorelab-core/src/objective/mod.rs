//! Training objectives.
//!
//! Every objective is a batch average. The composite loss scores each
//! dimension's conditional separately,
//! `(1/N) sum_i sum_d [ 1/2 s_d(x_i)^2 + d s_d/d x_d (x_i) ]`,
//! and sits a model-independent constant above the squared-error divergence
//! `(1/2) E_p sum_d (s_d - s_d^data)^2`, so minimizing one minimizes the
//! other without ever touching data scores. The exact loss is the joint form
//! `(1/N) sum_i [ 1/2 |grad log q|^2 + tr hess log q ]`; the sliced loss is
//! its Monte Carlo estimate along Rademacher directions; the denoising loss
//! regresses conditional scores of noised points onto residuals; `Nll` is
//! plain maximum likelihood for tractable densities.
//!
//! Conditional models consume rows laid out as `[conditioning | sample]`:
//! the first `cond_dim` entries are held fixed, the rest are scored.

mod graphs;

use alloc::format;

use crate::data::{Batch, NoiseSchedule, Rng};
use crate::field::{ModelGraphs, ScoreField};
use crate::{Error, Result};

/// Which loss a training run optimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    /// Per-dimension conditional score matching on clean data.
    Csm,
    /// As `Csm`, with the context copy noised at `sigma_hat` and each head
    /// scalar noised at the stage level `sigma_i`; the pair arrives through
    /// the `sigmas` argument so one staged loop drives every level.
    AnnealedCsm,
    /// Joint score matching; the Hessian trace costs one second-order pass
    /// per coordinate.
    Exact,
    /// Random-projection estimate of `Exact`.
    Sliced { n_projections: usize },
    /// Conditional scores of `x + sigma * eps` regressed onto
    /// `(x - x~) / sigma^2`.
    Denoising { sigma: f64 },
    /// Mean negative log density.
    Nll,
}

fn check_batch(batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !batch.as_slice().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput { what: "batch" });
    }
    Ok(())
}

fn check_field_dim(field: &dyn ScoreField, batch: &Batch) -> Result<()> {
    if batch.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            what: "batch row",
            expected: field.dim(),
            got: batch.dim(),
        });
    }
    Ok(())
}

fn dispatch<M: ModelGraphs + ?Sized>(
    model: &M,
    batch: &Batch,
    kind: ObjectiveKind,
    sigmas: (f64, f64),
    rng: &mut Rng,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    check_batch(batch)?;
    match kind {
        ObjectiveKind::Csm => graphs::composite_pass(model, batch, None, grad),
        ObjectiveKind::AnnealedCsm => {
            let (sigma_i, sigma_hat) = sigmas;
            if !(sigma_i >= 0.0) || !(sigma_hat >= 0.0) || !sigma_i.is_finite() || !sigma_hat.is_finite() {
                return Err(Error::InvalidArgument {
                    what: format!("noise levels ({sigma_i}, {sigma_hat}) must be finite and nonnegative"),
                });
            }
            graphs::composite_pass(model, batch, Some((sigma_i, sigma_hat, rng)), grad)
        }
        ObjectiveKind::Exact => graphs::exact_pass(model, batch, grad),
        ObjectiveKind::Sliced { n_projections } => {
            graphs::sliced_pass(model, batch, n_projections, rng, grad)
        }
        ObjectiveKind::Denoising { sigma } => graphs::denoising_pass(model, batch, sigma, rng, grad),
        ObjectiveKind::Nll => graphs::nll_pass(model, batch, grad),
    }
}

/// Loss and its gradient with respect to every model parameter, written into
/// `grad` (one reverse sweep per recorded tape).
pub fn loss_grad<M: ModelGraphs + ?Sized>(
    model: &M,
    batch: &Batch,
    kind: ObjectiveKind,
    sigmas: (f64, f64),
    rng: &mut Rng,
    grad: &mut [f64],
) -> Result<f64> {
    if grad.len() != model.params().len() {
        return Err(Error::DimensionMismatch {
            what: "gradient buffer",
            expected: model.params().len(),
            got: grad.len(),
        });
    }
    dispatch(model, batch, kind, sigmas, rng, Some(grad))
}

/// Loss only. Draws the same noise as [`loss_grad`] would from the same rng
/// state, so value checks and gradient checks can share a stream.
pub fn loss_value<M: ModelGraphs + ?Sized>(
    model: &M,
    batch: &Batch,
    kind: ObjectiveKind,
    sigmas: (f64, f64),
    rng: &mut Rng,
) -> Result<f64> {
    dispatch(model, batch, kind, sigmas, rng, None)
}

/// Composite loss of a numeric field:
/// `(1/N) sum_i sum_d [ 1/2 s_d^2 + d s_d/d x_d ]`.
pub fn csm_loss(field: &dyn ScoreField, batch: &Batch) -> Result<f64> {
    check_batch(batch)?;
    check_field_dim(field, batch)?;
    let mut acc = 0.0;
    for x in batch.rows() {
        let (s, ds) = field.score_xderiv_all(x)?;
        for (a, b) in s.iter().zip(&ds) {
            acc += 0.5 * a * a + b;
        }
    }
    Ok(acc / batch.len() as f64)
}

/// Composite loss at stage `stage` of `schedule`: the context copy is noised
/// at `sigma_hat` (the final level), each head scalar at `sigma_i`.
pub fn annealed_csm_loss(
    field: &dyn ScoreField,
    batch: &Batch,
    stage: usize,
    schedule: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<f64> {
    check_batch(batch)?;
    check_field_dim(field, batch)?;
    if stage >= schedule.len() {
        return Err(Error::InvalidArgument {
            what: format!("stage {stage} out of range for a {}-level schedule", schedule.len()),
        });
    }
    let sigma_i = schedule.sigma(stage);
    let sigma_hat = schedule.last();
    let dim = field.dim();
    let mut eps = alloc::vec![0.0; 2 * dim];
    let mut ctx = alloc::vec![0.0; dim];
    let mut acc = 0.0;
    for x in batch.rows() {
        rng.fill_normal(&mut eps);
        for d in 0..dim {
            ctx[d] = x[d] + sigma_hat * eps[d];
        }
        for d in 0..dim {
            let x_t = x[d] + sigma_i * eps[dim + d];
            let (s, ds) = field.score_xderiv_split(&ctx, x_t, d)?;
            acc += 0.5 * s * s + ds;
        }
    }
    Ok(acc / batch.len() as f64)
}

/// Denoising loss with freshly drawn corruptions `x~ = x + sigma * eps`.
pub fn dsm_loss(field: &dyn ScoreField, batch: &Batch, sigma: f64, rng: &mut Rng) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument {
            what: format!("denoising sigma must be positive and finite, got {sigma}"),
        });
    }
    check_batch(batch)?;
    check_field_dim(field, batch)?;
    let mut noisy = Batch::zeros(batch.len(), batch.dim());
    for i in 0..batch.len() {
        let row = noisy.row_mut(i);
        rng.fill_normal(row);
        for (r, x) in row.iter_mut().zip(batch.row(i)) {
            *r = x + sigma * *r;
        }
    }
    dsm_loss_at(field, batch, &noisy, sigma)
}

/// Denoising loss at given corrupted points:
/// `(1/N) sum_i sum_d 1/2 (s_d(x~_i) - (x_id - x~_id)/sigma^2)^2`.
pub fn dsm_loss_at(field: &dyn ScoreField, batch: &Batch, noisy: &Batch, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument {
            what: format!("denoising sigma must be positive and finite, got {sigma}"),
        });
    }
    check_batch(batch)?;
    check_batch(noisy)?;
    check_field_dim(field, batch)?;
    if noisy.len() != batch.len() || noisy.dim() != batch.dim() {
        return Err(Error::DimensionMismatch {
            what: "corrupted batch",
            expected: batch.len() * batch.dim(),
            got: noisy.len() * noisy.dim(),
        });
    }
    let inv = 1.0 / (sigma * sigma);
    let mut acc = 0.0;
    for (x, xt) in batch.rows().zip(noisy.rows()) {
        let s = field.score_all(xt)?;
        for d in 0..field.dim() {
            let r = s[d] - (x[d] - xt[d]) * inv;
            acc += 0.5 * r * r;
        }
    }
    Ok(acc / batch.len() as f64)
}

/// Joint-form loss `(1/N) sum_i [ 1/2 |grad log q|^2 + tr hess log q ]`;
/// needs a tractable joint log density.
pub fn sm_loss<M: ModelGraphs + ?Sized>(model: &M, batch: &Batch) -> Result<f64> {
    check_batch(batch)?;
    graphs::exact_pass(model, batch, None)
}

/// Sliced estimate of [`sm_loss`] with `n_projections` Rademacher directions
/// per sample: `mean[ v' hess v + 1/2 (v' grad)^2 ]`.
pub fn ssm_loss<M: ModelGraphs + ?Sized>(
    model: &M,
    batch: &Batch,
    n_projections: usize,
    rng: &mut Rng,
) -> Result<f64> {
    check_batch(batch)?;
    graphs::sliced_pass(model, batch, n_projections, rng, None)
}

/// Squared-error divergence between two fields on a batch from the second:
/// `(1/2N) sum_i sum_d (s_d^q - s_d^p)^2`. Needs known data scores, so it is
/// an oracle for tests and benchmarks, not a trainable loss.
pub fn l_csm_divergence(
    field_q: &dyn ScoreField,
    field_p: &dyn ScoreField,
    batch: &Batch,
) -> Result<f64> {
    if field_q.dim() != field_p.dim() {
        return Err(Error::DimensionMismatch {
            what: "field dimensions",
            expected: field_p.dim(),
            got: field_q.dim(),
        });
    }
    check_batch(batch)?;
    check_field_dim(field_p, batch)?;
    let mut acc = 0.0;
    for x in batch.rows() {
        let sq = field_q.score_all(x)?;
        let sp = field_p.score_all(x)?;
        for (a, b) in sq.iter().zip(&sp) {
            let r = a - b;
            acc += 0.5 * r * r;
        }
    }
    Ok(acc / batch.len() as f64)
}

/// Batch estimate of the constant separating [`csm_loss`] from
/// [`l_csm_divergence`]: `-(1/2N) sum_i sum_d s_d^data(x_i)^2`.
pub fn csm_offset(field_p: &dyn ScoreField, batch: &Batch) -> Result<f64> {
    check_batch(batch)?;
    check_field_dim(field_p, batch)?;
    let mut acc = 0.0;
    for x in batch.rows() {
        let s = field_p.score_all(x)?;
        acc += s.iter().map(|v| 0.5 * v * v).sum::<f64>();
    }
    Ok(-acc / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use alloc::vec::Vec;

    use super::*;
    use crate::data::{geometric_schedule, ToyData};
    use crate::field::GaussianField;

    struct ZeroField(usize);

    impl ScoreField for ZeroField {
        fn dim(&self) -> usize {
            self.0
        }
        fn score_split(&self, _ctx: &[f64], _x_d: f64, _d: usize) -> Result<f64> {
            Ok(0.0)
        }
        fn score_xderiv_split(&self, _ctx: &[f64], _x_d: f64, _d: usize) -> Result<(f64, f64)> {
            Ok((0.0, 0.0))
        }
    }

    fn standard_batch(n: usize, dim: usize, seed: u64) -> Batch {
        ToyData::standard_gaussian(dim, 1.0)
            .sample(n, &mut Rng::stream(seed, "objective-test-data", 0))
            .unwrap()
    }

    #[test]
    fn csm_standard_normal_point_values() {
        let p = GaussianField::standard(1);
        let at_zero = csm_loss(&p, &Batch::from_rows(&[&[0.0]])).unwrap();
        assert!((at_zero - (-1.0)).abs() < 1e-15, "{at_zero}");
        let pair = csm_loss(&p, &Batch::from_rows(&[&[1.0], &[-1.0]])).unwrap();
        assert!((pair - (-0.5)).abs() < 1e-15, "{pair}");
    }

    #[test]
    fn csm_large_batch_approaches_half_below_zero() {
        let p = GaussianField::standard(1);
        let batch = standard_batch(10_000, 1, 3);
        let loss = csm_loss(&p, &batch).unwrap();
        assert!((loss - (-0.5)).abs() < 0.05, "{loss}");
    }

    #[test]
    fn csm_empty_batch_is_an_error() {
        let p = GaussianField::standard(1);
        assert_eq!(csm_loss(&p, &Batch::zeros(0, 1)), Err(Error::EmptyBatch));
    }

    #[test]
    fn divergence_vanishes_at_the_data_field() {
        let p = GaussianField::standard(2);
        let batch = standard_batch(64, 2, 4);
        let d = l_csm_divergence(&p, &p, &batch).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn divergence_matches_closed_form_for_scale_mismatch() {
        // q = N(0, sigma^2) against p = N(0,1): scores -x/sigma^2 vs -x, so
        // the divergence is (1/2)(1 - 1/sigma^2)^2 E[x^2].
        let p = GaussianField::standard(1);
        let batch = standard_batch(100_000, 1, 5);
        for sigma2 in [2.0, 1.7 * 1.7] {
            let q = GaussianField::diag(alloc::vec![0.0], alloc::vec![sigma2]).unwrap();
            let got = l_csm_divergence(&q, &p, &batch).unwrap();
            let want = 0.5 * (1.0 - 1.0 / sigma2) * (1.0 - 1.0 / sigma2);
            // Per-sample terms are c * x^2 with variance 2 c^2; allow 3 SE.
            let c = 0.5 * (1.0 - 1.0 / sigma2) * (1.0 - 1.0 / sigma2);
            let se = (2.0 * c * c / batch.len() as f64).sqrt();
            assert!((got - want).abs() < 3.0 * se, "sigma2={sigma2}: {got} vs {want}");
        }
    }

    #[test]
    fn composite_minus_divergence_is_the_data_constant() {
        // On a shared batch, csm_loss(q) - divergence(q, p) converges to
        // -(1/2) E_p[s_p^2], independent of q.
        let batch = standard_batch(100_000, 1, 6);
        let p = GaussianField::standard(1);
        let c = csm_offset(&p, &batch).unwrap();
        for (mean, var) in [(0.0, 2.0), (0.7, 1.0), (-0.3, 0.5)] {
            let q = GaussianField::diag(alloc::vec![mean], alloc::vec![var]).unwrap();
            let j = csm_loss(&q, &batch).unwrap();
            let l = l_csm_divergence(&q, &p, &batch).unwrap();
            // Per-sample deviation of (j - l) - c from its mean: estimate SE
            // from the per-sample terms directly.
            let mut terms = Vec::with_capacity(batch.len());
            for x in batch.rows() {
                let sq = q.score_all(x).unwrap()[0];
                let dq = q.score_xderiv_all(x).unwrap().1[0];
                let sp = p.score_all(x).unwrap()[0];
                terms.push(0.5 * sq * sq + dq - 0.5 * (sq - sp) * (sq - sp) + 0.5 * sp * sp);
            }
            let (m, v) = crate::math::mean_var(&terms);
            let se = (v / terms.len() as f64).sqrt();
            assert!((m - 0.0).abs() < 3.0 * se + 1e-12, "mean deviation {m}");
            assert!(((j - l) - c).abs() < 3.0 * se + 1e-12, "({j} - {l}) vs {c}");
        }
    }

    #[test]
    fn composite_argmin_over_scale_family_is_the_data_scale() {
        // J(sigma) = m2 / (2 sigma^4) - 1/sigma^2 over q = N(0, sigma^2):
        // the batch argmin is sqrt(m2), close to 1 at this sample size.
        let batch = standard_batch(100_000, 1, 7);
        let mut best = (f64::INFINITY, 0.0);
        let mut sigma = 0.8;
        while sigma <= 1.2 {
            let q = GaussianField::iso(alloc::vec![0.0], sigma).unwrap();
            let j = csm_loss(&q, &batch).unwrap();
            if j < best.0 {
                best = (j, sigma);
            }
            sigma += 0.001;
        }
        assert!((best.1 - 1.0).abs() < 0.02, "argmin sigma = {}", best.1);
    }

    #[test]
    fn dsm_forced_corruption_worked_example() {
        // Zero scores, x = 0 corrupted to 0.1 at sigma = 0.1: the target is
        // -10, so the loss is (1/2) * 10^2.
        let f = ZeroField(1);
        let clean = Batch::from_rows(&[&[0.0]]);
        let noisy = Batch::from_rows(&[&[0.1]]);
        let loss = dsm_loss_at(&f, &clean, &noisy, 0.1).unwrap();
        assert!((loss - 50.0).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn dsm_minimizer_matches_the_convolved_variance() {
        // Fitting N(0, v) by denoising at sigma = 0.5 on N(0,1) data should
        // pick v near 1 + sigma^2, not the data variance.
        let sigma = 0.5;
        let batch = standard_batch(100_000, 1, 8);
        let mut noisy = Batch::zeros(batch.len(), 1);
        let mut rng = Rng::stream(8, "dsm-noise", 0);
        for i in 0..batch.len() {
            noisy.row_mut(i)[0] = batch.row(i)[0] + sigma * rng.normal();
        }
        let mut best = (f64::INFINITY, 0.0);
        let mut v = 1.0;
        while v <= 1.5 {
            let q = GaussianField::diag(alloc::vec![0.0], alloc::vec![v]).unwrap();
            let loss = dsm_loss_at(&q, &batch, &noisy, sigma).unwrap();
            if loss < best.0 {
                best = (loss, v);
            }
            v += 0.005;
        }
        assert!((best.1 - 1.25).abs() < 0.05, "argmin v = {}", best.1);
    }

    #[test]
    fn dsm_prefers_the_convolved_score_over_the_data_score() {
        let sigma = 0.5;
        let batch = standard_batch(100_000, 1, 9);
        let mut noisy = Batch::zeros(batch.len(), 1);
        let mut rng = Rng::stream(9, "dsm-noise", 0);
        for i in 0..batch.len() {
            noisy.row_mut(i)[0] = batch.row(i)[0] + sigma * rng.normal();
        }
        let convolved = GaussianField::diag(alloc::vec![0.0], alloc::vec![1.0 + sigma * sigma]).unwrap();
        let data = GaussianField::standard(1);
        let a = dsm_loss_at(&convolved, &batch, &noisy, sigma).unwrap();
        let b = dsm_loss_at(&data, &batch, &noisy, sigma).unwrap();
        assert!(a < b, "convolved {a} vs data {b}");
    }

    #[test]
    fn dsm_rejects_nonpositive_sigma() {
        let f = ZeroField(1);
        let batch = Batch::from_rows(&[&[0.0]]);
        let mut rng = Rng::new(0);
        assert!(matches!(
            dsm_loss(&f, &batch, 0.0, &mut rng),
            Err(Error::InvalidArgument { .. })
        ));
    }

    #[test]
    fn annealed_stage_one_mean_matches_widened_moment() {
        // 1-D, fixed field s(x) = -x, head noise sigma_i = 1: the loss
        // estimates E[x~^2]/2 - 1 over x~ ~ N(0, 2), which is 0.
        let p = GaussianField::standard(1);
        let schedule = geometric_schedule(1.0, 0.04, 10).unwrap();
        let batch = standard_batch(10_000, 1, 10);
        let mut rng = Rng::stream(10, "annealed", 0);
        let loss = annealed_csm_loss(&p, &batch, 0, &schedule, &mut rng).unwrap();
        assert!(loss.abs() < 0.05, "{loss}");
    }

    #[test]
    fn annealed_stage_out_of_range_is_an_error() {
        let p = GaussianField::standard(1);
        let schedule = geometric_schedule(1.0, 0.04, 10).unwrap();
        let batch = Batch::from_rows(&[&[0.0]]);
        let mut rng = Rng::new(0);
        assert!(matches!(
            annealed_csm_loss(&p, &batch, 10, &schedule, &mut rng),
            Err(Error::InvalidArgument { .. })
        ));
    }

    #[test]
    fn annealed_tiny_noise_approaches_clean_composite() {
        let p = GaussianField::full(
            alloc::vec![0.3, -0.2],
            alloc::vec![1.0, 0.6, 0.6, 1.4],
        )
        .unwrap();
        let batch = standard_batch(32, 2, 11);
        let schedule = geometric_schedule(1e-9, 1e-10, 3).unwrap();
        let mut rng = Rng::stream(11, "annealed", 0);
        let a = annealed_csm_loss(&p, &batch, 2, &schedule, &mut rng).unwrap();
        let c = csm_loss(&p, &batch).unwrap();
        assert!((a - c).abs() < 1e-7, "{a} vs {c}");
    }

    #[test]
    fn composite_of_ar_field_is_the_sum_of_per_conditional_terms() {
        // Each dimension's contribution is exactly the 1-D joint-form loss
        // of that conditional, evaluated at the sample prefix.
        let p = GaussianField::full(
            alloc::vec![0.1, 0.0, -0.4],
            alloc::vec![
                1.0, 0.5, 0.2, //
                0.5, 1.3, 0.4, //
                0.2, 0.4, 0.9,
            ],
        )
        .unwrap();
        let batch = standard_batch(16, 3, 12);
        let whole = csm_loss(&p, &batch).unwrap();
        let mut by_dim = 0.0;
        for x in batch.rows() {
            for d in 0..3 {
                let (s, ds) = p.conditional_score_xderiv(x, d).unwrap();
                by_dim += 0.5 * s * s + ds;
            }
        }
        by_dim /= batch.len() as f64;
        assert!((whole - by_dim).abs() < 1e-12);
    }
}
