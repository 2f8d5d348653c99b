//! Wall-clock comparison of exact score matching against the per-dimension
//! composite objective at matched parameter counts.
//!
//! Exact score matching needs one second-order sweep per coordinate, so its
//! per-iteration cost grows with the dimension even at a fixed parameter
//! count; the composite objective reuses one context pass across all heads
//! and stays near-flat per dimension. `bench.csv` holds the deterministic
//! identity of each setting (parameter counts, initial losses); measured
//! seconds go to `timing.csv`, which is the one output a rerun is not
//! expected to reproduce byte for byte.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;

use scorelab_core::data::{Rng, ToyData};
use scorelab_core::field::{ArCsmModel, EnergyModel, ModelGraphs};
use scorelab_core::objective::{loss_grad, ObjectiveKind};

use crate::config::Config;
use crate::experiments::{self, core_err, mean_variance};
use crate::io;

/// Parameter counts must agree to 5% for the comparison to be fair.
pub const PARAM_MATCH_TOL: f64 = 0.05;

struct MethodRun {
    dim: usize,
    method: &'static str,
    params: usize,
    loss: f64,
    secs: Vec<f64>,
}

fn time_method<M: ModelGraphs>(
    model: &M,
    data: &scorelab_core::data::Batch,
    kind: ObjectiveKind,
    reps: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; model.params().len()];
    // One untimed pass warms caches and returns the deterministic loss.
    let loss = loss_grad(model, data, kind, (0.0, 0.0), &mut Rng::stream(seed, "warm", 0), &mut grad)
        .map_err(core_err)?;
    let mut secs = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut rng = Rng::stream(seed, "timed", rep as u64);
        let t0 = Instant::now();
        loss_grad(model, data, kind, (0.0, 0.0), &mut rng, &mut grad).map_err(core_err)?;
        secs.push(t0.elapsed().as_secs_f64());
    }
    Ok((loss, secs))
}

pub fn run(cfg: &Config, out: &Path) -> Result<()> {
    experiments::prepare(cfg, out)?;
    let t = &cfg.timing;
    anyhow::ensure!(!t.dims.is_empty(), "timing.dims is empty");
    anyhow::ensure!(t.reps >= 1, "timing.reps must be at least 1");
    anyhow::ensure!(t.batch_size >= 1, "timing.batch_size must be at least 1");

    let mut runs: Vec<MethodRun> = Vec::new();
    for &dim in &t.dims {
        anyhow::ensure!(dim >= 1, "timing dimension must be at least 1");
        let mut rng = Rng::stream(cfg.seed, "timing-init", dim as u64);
        let csm = ArCsmModel::new(
            dim,
            0,
            cfg.model.ctx_dim,
            &cfg.model.made_hidden,
            &cfg.model.head_hidden,
            &mut rng,
        );
        let p_csm = csm.params().len();
        let energy = EnergyModel::with_param_budget(dim, p_csm, &mut rng);
        let p_energy = energy.params().len();
        let gap = (p_energy as f64 - p_csm as f64).abs() / p_csm as f64;
        anyhow::ensure!(
            gap <= PARAM_MATCH_TOL,
            "parameter budgets differ by {:.1}% at dim {dim} ({p_csm} vs {p_energy})",
            gap * 100.0
        );

        let data = ToyData::Gaussian { dim, mean: vec![0.0; dim], sigma: 1.0 }
            .sample(t.batch_size, &mut Rng::stream(cfg.seed, "timing-data", dim as u64))
            .map_err(core_err)?;

        let (loss, secs) =
            time_method(&csm, &data, ObjectiveKind::Csm, t.reps, cfg.seed ^ dim as u64)?;
        runs.push(MethodRun { dim, method: "csm", params: p_csm, loss, secs });
        let (loss, secs) =
            time_method(&energy, &data, ObjectiveKind::Exact, t.reps, cfg.seed ^ dim as u64)?;
        runs.push(MethodRun { dim, method: "exact-sm", params: p_energy, loss, secs });
    }

    let bench_rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.dim.to_string(),
                r.method.to_string(),
                r.params.to_string(),
                io::fmt_f64(r.loss),
            ]
        })
        .collect();
    io::write_table_csv(&out.join("bench.csv"), "dim,method,params,loss", &bench_rows)?;

    let timing_rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            let (mean, var) = mean_variance(&r.secs);
            vec![
                r.dim.to_string(),
                r.method.to_string(),
                io::fmt_f64(mean),
                io::fmt_f64(var.sqrt()),
                io::fmt_f64(mean / r.dim as f64),
            ]
        })
        .collect();
    io::write_table_csv(
        &out.join("timing.csv"),
        "dim,method,seconds_per_iter,seconds_stddev,seconds_per_dim",
        &timing_rows,
    )?;
    Ok(())
}
