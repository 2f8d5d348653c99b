//! `scorelab`: experiment harness for the score-matching laboratory.
//!
//! Every subcommand resolves a config (built-in defaults, or `--config`),
//! writes the fully materialized snapshot into the output directory, then
//! emits CSV outputs whose bytes depend only on the config. Exit codes:
//! 0 on success, 1 on a runtime failure, 2 on a usage error (bad flags,
//! missing or malformed config).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scorelab_cli::config::{self, Config};
use scorelab_cli::experiments;

#[derive(Parser)]
#[command(name = "scorelab", version, about = "Score-matching experiment harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Config file; defaults to the experiment's built-in config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to runs/<experiment>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Checkpoint to sample from (overrides [sample] checkpoint).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Number of samples (overrides [sample] n).
    #[arg(long)]
    n: Option<usize>,
    /// Worker threads for the chains; does not change the output bytes.
    #[arg(long)]
    parallel_chains: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Seconds per training iteration: exact score matching vs composite.
    BenchTiming(RunArgs),
    /// Estimator variance on a fixed field: sliced vs composite.
    BenchVariance(RunArgs),
    /// Held-out NLL of one model class under different objectives.
    Nll(RunArgs),
    /// Fit a 2-D density, sample it, and compare mode coverage.
    Fit(RunArgs),
    /// Draw samples from a stored checkpoint.
    Sample(SampleArgs),
    /// Corrupt ring data with outliers and restore it.
    Denoise(RunArgs),
    /// Score-based out-of-distribution detection.
    Ood(RunArgs),
    /// Implicit-encoder VAE on a linear-Gaussian benchmark.
    Vae(RunArgs),
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::BenchTiming(_) => "bench-timing",
            Cmd::BenchVariance(_) => "bench-variance",
            Cmd::Nll(_) => "nll",
            Cmd::Fit(_) => "fit",
            Cmd::Sample(_) => "sample",
            Cmd::Denoise(_) => "denoise",
            Cmd::Ood(_) => "ood",
            Cmd::Vae(_) => "vae",
        }
    }

    fn run_args(&self) -> &RunArgs {
        match self {
            Cmd::BenchTiming(a)
            | Cmd::BenchVariance(a)
            | Cmd::Nll(a)
            | Cmd::Fit(a)
            | Cmd::Denoise(a)
            | Cmd::Ood(a)
            | Cmd::Vae(a) => a,
            Cmd::Sample(a) => &a.run,
        }
    }
}

/// Resolve the config, honoring flag overrides; errors here are usage
/// errors.
fn resolve_config(cmd: &Cmd) -> anyhow::Result<Config> {
    let args = cmd.run_args();
    let mut cfg = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::defaults_for(cmd.name()),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.version = config::version_string();
    if let Cmd::Sample(s) = cmd {
        if let Some(p) = &s.checkpoint {
            cfg.sample.checkpoint = p.display().to_string();
        }
        if let Some(n) = s.n {
            cfg.sample.n = n;
        }
        if let Some(k) = s.parallel_chains {
            cfg.sample.parallel_chains = k;
        }
        if cfg.sample.checkpoint.is_empty() {
            anyhow::bail!("sample needs --checkpoint (or [sample] checkpoint in the config)");
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    // clap itself exits with code 2 on unknown flags or bad values.
    let cli = Cli::parse();
    let cfg = match resolve_config(&cli.cmd) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("usage error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let out = cli
        .cmd
        .run_args()
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(cli.cmd.name()));
    let result = match &cli.cmd {
        Cmd::BenchTiming(_) => experiments::bench_timing::run(&cfg, &out),
        Cmd::BenchVariance(_) => experiments::bench_variance::run(&cfg, &out),
        Cmd::Nll(_) => experiments::nll::run(&cfg, &out),
        Cmd::Fit(_) => experiments::fit::run(&cfg, &out),
        Cmd::Sample(_) => experiments::sample::run(&cfg, &out),
        Cmd::Denoise(_) => experiments::denoise::run(&cfg, &out),
        Cmd::Ood(_) => experiments::ood::run(&cfg, &out),
        Cmd::Vae(_) => experiments::vae::run(&cfg, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
