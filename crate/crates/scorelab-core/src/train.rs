//! Optimization: Adam, loss traces, convergence windows, and the staged
//! training loop used by every objective.

use alloc::vec::Vec;

use crate::data::{batches, Batch, NoiseSchedule, Rng};
use crate::field::ModelGraphs;
use crate::objective::{self, ObjectiveKind};
use crate::{Error, Result};

/// Wall-clock source. The core never reads time on its own; callers with an
/// OS clock inject one, everyone else gets zeros (and byte-stable traces).
pub trait Clock {
    fn now_secs(&self) -> f64;
}

/// Clock that always reads zero.
pub struct NoClock;

impl Clock for NoClock {
    fn now_secs(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub stage: usize,
    pub epoch: usize,
    pub iteration: usize,
    pub loss: f64,
    pub elapsed_secs: f64,
}

/// Loss history across stages; iteration counts monotonically increase over
/// the whole run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    rows: Vec<TraceRow>,
}

impl LossTrace {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn push(&mut self, row: TraceRow) {
        debug_assert!(self.rows.last().is_none_or(|r| row.iteration > r.iteration));
        self.rows.push(row);
    }
    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }
    pub fn len(&self) -> usize {
        self.rows.len()
    }
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
    pub fn last_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }

    /// Mean loss over the final `window` rows.
    pub fn tail_mean(&self, window: usize) -> Option<f64> {
        if self.rows.len() < window || window == 0 {
            return None;
        }
        let tail = &self.rows[self.rows.len() - window..];
        Some(tail.iter().map(|r| r.loss).sum::<f64>() / window as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction; state length is fixed at construction.
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n_params: usize) -> Adam {
        Adam {
            cfg,
            m: alloc::vec![0.0; n_params],
            v: alloc::vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - crate::math::powf(b1, self.t as f64);
        let bc2 = 1.0 - crate::math::powf(b2, self.t as f64);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.cfg.lr * mh / (crate::math::sqrt(vh) + self.cfg.eps);
        }
    }
}

/// Scale `grad` so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = crate::math::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Epoch cap per stage.
    pub max_epochs_per_stage: usize,
    /// Stop a stage once the mean loss of the last `window` iterations
    /// improves on the previous window by less than `tol_rel` relatively.
    pub convergence_window: usize,
    pub convergence_tol_rel: f64,
    /// Global gradient-norm clip; `None` disables.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 128,
            max_epochs_per_stage: 50,
            convergence_window: 50,
            convergence_tol_rel: 1e-4,
            grad_clip: Some(100.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub trace: LossTrace,
    /// Parameter snapshot at the end of every stage, in stage order.
    pub stage_params: Vec<Vec<f64>>,
    pub final_loss: f64,
}

/// Detects the "no progress over a window" stop condition.
struct ConvergenceWindow {
    window: usize,
    tol_rel: f64,
    losses: Vec<f64>,
}

impl ConvergenceWindow {
    fn new(window: usize, tol_rel: f64) -> Self {
        ConvergenceWindow {
            window,
            tol_rel,
            losses: Vec::new(),
        }
    }

    fn push_and_check(&mut self, loss: f64) -> bool {
        self.losses.push(loss);
        let w = self.window;
        if self.losses.len() < 2 * w {
            return false;
        }
        let n = self.losses.len();
        let curr: f64 = self.losses[n - w..].iter().sum::<f64>() / w as f64;
        let prev: f64 = self.losses[n - 2 * w..n - w].iter().sum::<f64>() / w as f64;
        let improvement = prev - curr;
        improvement < self.tol_rel * prev.abs().max(1e-12)
    }
}

/// Train `model` on `data` by minibatch Adam, one stage per schedule level.
///
/// The schedule matters only to the annealed objective; other objectives
/// should pass a single-level schedule. Per-stage parameter snapshots are
/// returned so annealed samplers can use the stage-`i` model at stage `i`.
pub fn train<M: ModelGraphs>(
    model: &mut M,
    data: &Batch,
    objective: ObjectiveKind,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    rng: &mut Rng,
    clock: &dyn Clock,
) -> Result<TrainResult> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n_params = model.params().len();
    let mut adam = Adam::new(cfg.adam, n_params);
    let mut grad = alloc::vec![0.0; n_params];
    let mut trace = LossTrace::new();
    let mut stage_params: Vec<Vec<f64>> = Vec::with_capacity(schedule.len());
    let t0 = clock.now_secs();
    let mut iteration = 0usize;

    let sigma_hat = schedule.last();
    for stage in 0..schedule.len() {
        let sigma_i = schedule.sigma(stage);
        let mut conv = ConvergenceWindow::new(cfg.convergence_window, cfg.convergence_tol_rel);
        adam.reset();
        'stage: for epoch in 0..cfg.max_epochs_per_stage {
            for minibatch in batches(data, cfg.batch_size, rng) {
                let loss = objective::loss_grad(
                    model,
                    &minibatch,
                    objective,
                    (sigma_i, sigma_hat),
                    rng,
                    &mut grad,
                )?;
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged { stage, iteration, trace });
                }
                if let Some(max_norm) = cfg.grad_clip {
                    clip_grad_norm(&mut grad, max_norm);
                }
                adam.step(model.params_mut().values_mut(), &grad);
                iteration += 1;
                trace.push(TraceRow {
                    stage,
                    epoch,
                    iteration,
                    loss,
                    elapsed_secs: clock.now_secs() - t0,
                });
                if conv.push_and_check(loss) {
                    break 'stage;
                }
            }
        }
        stage_params.push(model.params().values().to_vec());
    }

    let final_loss = trace.last_loss().unwrap_or(f64::NAN);
    Ok(TrainResult {
        trace,
        stage_params,
        final_loss,
    })
}

/// Re-evaluate a fixed objective (no parameter updates); used by variance
/// benchmarks.
pub fn eval_objective<M: ModelGraphs>(
    model: &M,
    batch: &Batch,
    objective: ObjectiveKind,
    sigmas: (f64, f64),
    rng: &mut Rng,
) -> Result<f64> {
    objective::loss_value(model, batch, objective, sigmas, rng)
}
