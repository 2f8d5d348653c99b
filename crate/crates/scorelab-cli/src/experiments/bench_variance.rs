//! Estimator-variance comparison on a fixed analytic score field.
//!
//! The field is the correctly scaled Gaussian family, so every objective
//! evaluates the same scores; the only randomness is the minibatch draw and,
//! for the sliced objective, its projection vectors. Two settings are
//! reported: fresh minibatch per trial (both sources of noise) and one
//! frozen minibatch (projection noise only). On the frozen batch the
//! composite objective is a deterministic function of the data, so its
//! variance is exactly zero: the driver verifies all trials return
//! bit-identical losses before writing the zero.

use std::path::Path;

use anyhow::Result;

use scorelab_core::data::Rng;
use scorelab_core::field::GaussianScaleFamily;
use scorelab_core::objective::{loss_value, ObjectiveKind};

use crate::config::Config;
use crate::experiments::{self, core_err, mean_variance};
use crate::io;

pub fn run(cfg: &Config, out: &Path) -> Result<()> {
    experiments::prepare(cfg, out)?;
    let v = &cfg.variance;
    anyhow::ensure!(v.trials >= 2, "variance.trials must be at least 2");
    anyhow::ensure!(v.batch_size >= 1, "variance.batch_size must be at least 1");
    anyhow::ensure!(!v.projection_counts.is_empty(), "variance.projection_counts is empty");
    anyhow::ensure!(
        cfg.dataset.kind == "gaussian",
        "the variance benchmark expects an isotropic gaussian dataset"
    );
    let data = cfg.dataset.build()?;
    let family =
        GaussianScaleFamily::new(cfg.dataset.dim, cfg.dataset.sigma).map_err(core_err)?;

    // method label, objective, projection count column.
    let mut methods: Vec<(String, ObjectiveKind, usize)> =
        vec![("csm".into(), ObjectiveKind::Csm, 0)];
    for &k in &v.projection_counts {
        anyhow::ensure!(k >= 1, "projection counts must be at least 1");
        methods.push((format!("ssm-{k}"), ObjectiveKind::Sliced { n_projections: k }, k));
    }

    let mut summary: Vec<Vec<String>> = Vec::new();
    let mut losses_rows: Vec<Vec<String>> = Vec::new();
    let record = |setting: &str,
                  label: &str,
                  k: usize,
                  losses: &[f64],
                  summary: &mut Vec<Vec<String>>,
                  rows: &mut Vec<Vec<String>>| {
        let bit_equal = losses.iter().all(|x| x.to_bits() == losses[0].to_bits());
        let (mean, var) = mean_variance(losses);
        let var = if bit_equal { 0.0 } else { var };
        summary.push(vec![
            setting.to_string(),
            label.to_string(),
            k.to_string(),
            io::fmt_f64(mean),
            io::fmt_f64(var),
        ]);
        for (trial, loss) in losses.iter().enumerate() {
            rows.push(vec![
                setting.to_string(),
                label.to_string(),
                k.to_string(),
                trial.to_string(),
                io::fmt_f64(*loss),
            ]);
        }
    };

    // Fresh minibatch per trial; all methods see the same batches.
    let mut batches = Vec::with_capacity(v.trials);
    for trial in 0..v.trials {
        batches.push(
            data.sample(v.batch_size, &mut Rng::stream(cfg.seed, "batch", trial as u64))
                .map_err(core_err)?,
        );
    }
    for (mi, (label, kind, k)) in methods.iter().enumerate() {
        let mut losses = Vec::with_capacity(v.trials);
        for (trial, batch) in batches.iter().enumerate() {
            let mut rng = Rng::stream(cfg.seed, "proj-fresh", (mi * v.trials + trial) as u64);
            losses.push(loss_value(&family, batch, *kind, (0.0, 0.0), &mut rng).map_err(core_err)?);
        }
        record("fresh", label, *k, &losses, &mut summary, &mut losses_rows);
    }

    // One frozen minibatch; only projection noise remains.
    let fixed = data
        .sample(v.batch_size, &mut Rng::stream(cfg.seed, "fixed-batch", 0))
        .map_err(core_err)?;
    for (mi, (label, kind, k)) in methods.iter().enumerate() {
        let mut losses = Vec::with_capacity(v.trials);
        for trial in 0..v.trials {
            let mut rng = Rng::stream(cfg.seed, "proj-fixed", (mi * v.trials + trial) as u64);
            losses
                .push(loss_value(&family, &fixed, *kind, (0.0, 0.0), &mut rng).map_err(core_err)?);
        }
        if *label == "csm" {
            anyhow::ensure!(
                losses.iter().all(|x| x.to_bits() == losses[0].to_bits()),
                "composite loss varied across re-evaluations of a frozen batch"
            );
        }
        record("fixed", label, *k, &losses, &mut summary, &mut losses_rows);
    }

    io::write_table_csv(
        &out.join("variance.csv"),
        "setting,method,n_projections,mean,variance",
        &summary,
    )?;
    io::write_table_csv(
        &out.join("losses.csv"),
        "setting,method,n_projections,trial,loss",
        &losses_rows,
    )?;
    Ok(())
}
