//! Sampling from a stored checkpoint.
//!
//! Every chain index owns a seeded random stream derived from the master
//! seed, so splitting the chains across worker threads reorders only the
//! work, never the draws: `samples.csv` is byte-identical for any
//! `--parallel-chains` value.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{Context, Result};

use scorelab_core::data::Batch;
use scorelab_core::field::{AnnealedScoreSource, StagedSource};
use scorelab_core::sample::{sample_one, LangevinConfig};

use crate::config::Config;
use crate::experiments::{self, core_err};
use crate::io::{self, load_checkpoint};

pub fn sample_parallel<S: AnnealedScoreSource + Sync>(
    source: &S,
    lcfg: &LangevinConfig,
    n: usize,
    master: u64,
    threads: usize,
) -> Result<Batch> {
    let threads = threads.max(1).min(n.max(1));
    let mut out = Batch::zeros(n, source.dim());
    if threads == 1 {
        for i in 0..n {
            let row = sample_one(source, lcfg, master, i).map_err(core_err)?;
            out.row_mut(i).copy_from_slice(&row);
        }
        return Ok(out);
    }
    let slots: Mutex<Vec<Option<scorelab_core::Result<Vec<f64>>>>> =
        Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for t in 0..threads {
            let slots = &slots;
            scope.spawn(move || {
                for i in (t..n).step_by(threads) {
                    let row = sample_one(source, lcfg, master, i);
                    slots.lock().unwrap()[i] = Some(row);
                }
            });
        }
    });
    let slots = slots.into_inner().unwrap();
    for (i, slot) in slots.into_iter().enumerate() {
        let row = slot.expect("all chains were scheduled").map_err(core_err)?;
        out.row_mut(i).copy_from_slice(&row);
    }
    Ok(out)
}

pub fn run(cfg: &Config, out: &Path) -> Result<()> {
    anyhow::ensure!(
        !cfg.sample.checkpoint.is_empty(),
        "sampling needs a checkpoint (--checkpoint or [sample] checkpoint)"
    );
    anyhow::ensure!(cfg.sample.n >= 1, "sample.n must be at least 1");
    experiments::prepare(cfg, out)?;
    let ckpt = load_checkpoint(&PathBuf::from(&cfg.sample.checkpoint))
        .with_context(|| format!("loading checkpoint {}", cfg.sample.checkpoint))?;
    let staged = StagedSource { fields: ckpt.stage_models()? };
    let lcfg = LangevinConfig::new(cfg.sampler.eps0, cfg.sampler.steps, ckpt.schedule()?)
        .map_err(core_err)?;
    let samples = sample_parallel(
        &staged,
        &lcfg,
        cfg.sample.n,
        cfg.seed,
        cfg.sample.parallel_chains,
    )?;
    io::write_batch_csv(&out.join("samples.csv"), &samples)?;
    Ok(())
}
