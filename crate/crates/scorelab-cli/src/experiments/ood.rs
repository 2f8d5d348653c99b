//! Out-of-distribution detection with the summed conditional score.
//!
//! A conditional score model trains on the in-distribution data; the
//! detection statistic for a point is the sum of its conditional scores,
//! which drifts far from its in-distribution range once the field has to
//! extrapolate. Detection quality is summarized as the probability that a
//! box-uniform outlier outranks an in-distribution point (ties half), and
//! the same statistic applied to one set against itself lands at one half
//! exactly.

use std::path::Path;

use anyhow::Result;

use scorelab_core::data::{NoiseSchedule, Rng};
use scorelab_core::field::ScoreField;
use scorelab_core::objective::ObjectiveKind;
use scorelab_core::train::{train, NoClock};

use crate::config::Config;
use crate::experiments::{self, core_err};
use crate::io;
use crate::stats::auroc;

pub fn run(cfg: &Config, out: &Path) -> Result<()> {
    experiments::prepare(cfg, out)?;
    let o = &cfg.ood;
    anyhow::ensure!(o.n_in >= 1 && o.n_out >= 1, "ood sample counts must be at least 1");
    anyhow::ensure!(o.box_hi > o.box_lo, "ood.box_hi must exceed ood.box_lo");
    let data = cfg.dataset.build()?;
    let train_set = data
        .sample(cfg.dataset.n_train, &mut Rng::stream(cfg.seed, "data", 0))
        .map_err(core_err)?;
    let dim = train_set.dim();

    let arch = experiments::arch_from(cfg, dim, 0);
    let mut model = arch.build(&mut Rng::stream(cfg.seed, "init", 0));
    let result = train(
        &mut model,
        &train_set,
        ObjectiveKind::Csm,
        &NoiseSchedule::single(1.0),
        &cfg.train.build(),
        &mut Rng::stream(cfg.seed, "train", 0),
        &NoClock,
    )
    .map_err(core_err)?;
    experiments::write_trace_csv(&out.join("trace.csv"), &result.trace)?;

    let test_in = data
        .sample(o.n_in, &mut Rng::stream(cfg.seed, "test", 0))
        .map_err(core_err)?;
    let mut rng_out = Rng::stream(cfg.seed, "ood", 0);
    let mut h_in = Vec::with_capacity(o.n_in);
    for row in test_in.rows() {
        h_in.push(model.ood_statistic(row).map_err(core_err)?);
    }
    let mut h_out = Vec::with_capacity(o.n_out);
    let mut point = vec![0.0; dim];
    for _ in 0..o.n_out {
        for v in &mut point {
            *v = rng_out.uniform_in(o.box_lo, o.box_hi);
        }
        h_out.push(model.ood_statistic(&point).map_err(core_err)?);
    }

    let score = auroc(&h_out, &h_in)?;
    let self_score = auroc(&h_in, &h_in)?;

    let mut rows: Vec<Vec<String>> = Vec::with_capacity(o.n_in + o.n_out);
    for h in &h_in {
        rows.push(vec!["in".into(), io::fmt_f64(*h)]);
    }
    for h in &h_out {
        rows.push(vec!["out".into(), io::fmt_f64(*h)]);
    }
    io::write_table_csv(&out.join("scores.csv"), "set,statistic", &rows)?;
    io::write_table_csv(
        &out.join("summary.csv"),
        "auroc,auroc_self,n_in,n_out",
        &[vec![
            io::fmt_f64(score),
            io::fmt_f64(self_score),
            o.n_in.to_string(),
            o.n_out.to_string(),
        ]],
    )?;
    Ok(())
}
