//! Experiment configuration: one TOML document with every section present.
//!
//! Each run directory receives a fully resolved snapshot (`run.toml`) with
//! all defaults materialized plus the seed and tool version, and that
//! snapshot is itself a loadable config, so any run can be reproduced with
//! `--config <dir>/run.toml`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use scorelab_core::data::{geometric_schedule, NoiseSchedule, ToyData};
use scorelab_core::train::{AdamConfig, TrainConfig};

/// Version stamp written into every snapshot.
pub fn version_string() -> String {
    format!("scorelab-{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Tool version that produced a snapshot; informational on load.
    pub version: String,
    /// Master seed; every random stream in a run derives from it.
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub train: TrainSection,
    pub sampler: SamplerSection,
    pub timing: TimingSection,
    pub variance: VarianceSection,
    pub nll: NllSection,
    pub fit: FitSection,
    pub sample: SampleSection,
    pub denoise: DenoiseSection,
    pub ood: OodSection,
    pub vae: VaeSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            version: version_string(),
            seed: 7,
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            schedule: ScheduleConfig::default(),
            train: TrainSection::default(),
            sampler: SamplerSection::default(),
            timing: TimingSection::default(),
            variance: VarianceSection::default(),
            nll: NllSection::default(),
            fit: FitSection::default(),
            sample: SampleSection::default(),
            denoise: DenoiseSection::default(),
            ood: OodSection::default(),
            vae: VaeSection::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Config =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Built-in defaults for one experiment: the shared template with the
    /// dataset and budgets each experiment expects out of the box.
    pub fn defaults_for(experiment: &str) -> Config {
        let mut cfg = Config::default();
        match experiment {
            "bench-timing" => {
                cfg.dataset = DatasetConfig {
                    kind: "gaussian".into(),
                    dim: 10,
                    sigma: 1.0,
                    ..DatasetConfig::default()
                };
            }
            "bench-variance" => {
                cfg.dataset = DatasetConfig {
                    kind: "gaussian".into(),
                    dim: 100,
                    sigma: 0.1,
                    ..DatasetConfig::default()
                };
            }
            "nll" => {
                cfg.dataset = DatasetConfig {
                    kind: "gaussian-full".into(),
                    mean: vec![0.0, 0.0],
                    cov: vec![1.0, 0.8, 0.8, 1.0],
                    n_train: 8000,
                    n_test: 4000,
                    ..DatasetConfig::default()
                };
                cfg.train.batch_size = 128;
                cfg.train.lr = 5e-3;
            }
            "fit" | "sample" => {
                cfg.dataset = DatasetConfig {
                    kind: "mixture-ring".into(),
                    radius: 2.0,
                    comp_sigma: 0.15,
                    n_train: 4000,
                    n_test: 2000,
                    ..DatasetConfig::default()
                };
                cfg.model = ModelConfig {
                    ctx_dim: 24,
                    made_hidden: vec![48],
                    head_hidden: vec![48],
                };
                cfg.train.lr = 3e-3;
                cfg.train.max_epochs_per_stage = 60;
            }
            "denoise" => {
                cfg.dataset = DatasetConfig {
                    kind: "two-rings".into(),
                    r_inner: 1.0,
                    r_outer: 2.0,
                    width: 0.1,
                    n_train: 4000,
                    n_test: 2000,
                    ..DatasetConfig::default()
                };
                cfg.model = ModelConfig {
                    ctx_dim: 24,
                    made_hidden: vec![48],
                    head_hidden: vec![48],
                };
                cfg.train.lr = 3e-3;
                cfg.train.max_epochs_per_stage = 60;
            }
            "ood" => {
                cfg.dataset = DatasetConfig {
                    kind: "gaussian".into(),
                    dim: 2,
                    mean: vec![3.0, 3.0],
                    sigma: 0.3,
                    n_train: 4000,
                    n_test: 1000,
                    ..DatasetConfig::default()
                };
                cfg.train.lr = 2e-3;
                cfg.train.max_epochs_per_stage = 80;
            }
            _ => {}
        }
        cfg
    }

    /// Write the resolved snapshot into `dir/run.toml`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).context("serializing config snapshot")?;
        let path = dir.join("run.toml");
        std::fs::write(&path, text)
            .with_context(|| format!("writing snapshot {}", path.display()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// One of: gaussian, gaussian-full, mixture-ring, two-rings, checkerboard.
    pub kind: String,
    pub dim: usize,
    /// Empty means the origin.
    pub mean: Vec<f64>,
    pub sigma: f64,
    /// Dense row-major covariance for gaussian-full.
    pub cov: Vec<f64>,
    pub center: [f64; 2],
    pub radius: f64,
    pub comp_sigma: f64,
    pub r_inner: f64,
    pub r_outer: f64,
    pub width: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: "gaussian".into(),
            dim: 2,
            mean: Vec::new(),
            sigma: 1.0,
            cov: Vec::new(),
            center: [0.0, 0.0],
            radius: 2.0,
            comp_sigma: 0.2,
            r_inner: 1.0,
            r_outer: 2.0,
            width: 0.1,
            n_train: 4000,
            n_test: 2000,
        }
    }
}

impl DatasetConfig {
    pub fn build(&self) -> Result<ToyData> {
        let data = match self.kind.as_str() {
            "gaussian" => {
                let mean = if self.mean.is_empty() {
                    vec![0.0; self.dim]
                } else {
                    self.mean.clone()
                };
                if mean.len() != self.dim {
                    bail!("dataset mean has {} entries for dim {}", mean.len(), self.dim);
                }
                ToyData::Gaussian { dim: self.dim, mean, sigma: self.sigma }
            }
            "gaussian-full" => {
                if self.mean.is_empty() {
                    bail!("gaussian-full needs an explicit mean");
                }
                if self.cov.len() != self.mean.len() * self.mean.len() {
                    bail!(
                        "gaussian-full cov has {} entries, expected {}",
                        self.cov.len(),
                        self.mean.len() * self.mean.len()
                    );
                }
                ToyData::GaussianFull { mean: self.mean.clone(), cov: self.cov.clone() }
            }
            "mixture-ring" => ToyData::MixtureRing {
                center: self.center,
                radius: self.radius,
                comp_sigma: self.comp_sigma,
            },
            "two-rings" => ToyData::TwoRings {
                center: self.center,
                r_inner: self.r_inner,
                r_outer: self.r_outer,
                width: self.width,
            },
            "checkerboard" => ToyData::Checkerboard,
            other => bail!("unknown dataset kind {other:?}"),
        };
        Ok(data)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub ctx_dim: usize,
    pub made_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { ctx_dim: 16, made_hidden: vec![32], head_hidden: vec![32] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub sigma_first: f64,
    pub sigma_last: f64,
    pub levels: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { sigma_first: 1.0, sigma_last: 0.04, levels: 10 }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        if self.levels == 1 {
            if !(self.sigma_last > 0.0) {
                bail!("schedule sigma_last must be positive");
            }
            return Ok(NoiseSchedule::single(self.sigma_last));
        }
        geometric_schedule(self.sigma_first, self.sigma_last, self.levels)
            .map_err(|e| anyhow::anyhow!("building schedule: {e}"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub max_epochs_per_stage: usize,
    pub convergence_window: usize,
    pub convergence_tol_rel: f64,
    pub lr: f64,
    /// 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch_size: 128,
            max_epochs_per_stage: 50,
            convergence_window: 50,
            convergence_tol_rel: 1e-4,
            lr: 2e-3,
            grad_clip: 100.0,
        }
    }
}

impl TrainSection {
    pub fn build(&self) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            batch_size: self.batch_size,
            max_epochs_per_stage: self.max_epochs_per_stage,
            convergence_window: self.convergence_window,
            convergence_tol_rel: self.convergence_tol_rel,
            grad_clip: if self.grad_clip > 0.0 { Some(self.grad_clip) } else { None },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    /// Step size at the final (smallest) noise level.
    pub eps0: f64,
    pub steps: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection { eps0: 1e-3, steps: 100 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSection {
    pub dims: Vec<usize>,
    pub reps: usize,
    pub batch_size: usize,
}

impl Default for TimingSection {
    fn default() -> Self {
        TimingSection { dims: vec![10, 100], reps: 5, batch_size: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceSection {
    pub trials: usize,
    pub batch_size: usize,
    pub projection_counts: Vec<usize>,
}

impl Default for VarianceSection {
    fn default() -> Self {
        VarianceSection { trials: 1000, batch_size: 8, projection_counts: vec![1, 4, 10] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NllSection {
    /// Objective labels: csm, exact, dsm-<sigma>, ssm-<n_projections>.
    pub methods: Vec<String>,
    pub epochs: usize,
}

impl Default for NllSection {
    fn default() -> Self {
        NllSection {
            methods: vec!["csm".into(), "dsm-0.1".into(), "dsm-0.5".into(), "dsm-0.01".into()],
            epochs: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub n_samples: usize,
    /// Score grid resolution per axis; 0 disables the grid output.
    pub grid: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
    /// Train the same-budget exact-likelihood baseline and emit mode
    /// coverage next to the score-matched fit.
    pub baseline: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection { n_samples: 5000, grid: 40, grid_lo: -4.0, grid_hi: 4.0, baseline: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    /// Checkpoint to sample from; the `--checkpoint` flag overrides it.
    pub checkpoint: String,
    pub n: usize,
    /// Worker threads for the chains; output bytes do not depend on it.
    pub parallel_chains: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection { checkpoint: String::new(), n: 1000, parallel_chains: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseSection {
    /// Per-coordinate probability of replacement by an outlier value.
    pub outlier_frac: f64,
    pub outlier_value: f64,
    pub n_points: usize,
    /// Restoration starts at the widest schedule level at or below this
    /// noise; annealing from the top would forget the clean coordinates.
    pub restore_sigma_max: f64,
}

impl Default for DenoiseSection {
    fn default() -> Self {
        DenoiseSection {
            outlier_frac: 0.1,
            outlier_value: 3.0,
            n_points: 400,
            restore_sigma_max: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OodSection {
    pub n_in: usize,
    pub n_out: usize,
    pub box_lo: f64,
    pub box_hi: f64,
}

impl Default for OodSection {
    fn default() -> Self {
        OodSection { n_in: 1000, n_out: 1000, box_lo: -4.0, box_hi: 4.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeSection {
    pub latent_dim: usize,
    pub obs_dim: usize,
    /// Row-major obs x latent loading matrix of the generator.
    pub true_w: Vec<f64>,
    pub true_c: Vec<f64>,
    pub true_sigma: f64,
    pub n_train: usize,
    pub steps: usize,
    pub score_updates_per_step: usize,
    pub batch_size: usize,
    pub score_batch_size: usize,
    pub entropy_mc: usize,
    pub enc_lr: f64,
    pub dec_lr: f64,
    pub score_lr: f64,
}

impl Default for VaeSection {
    fn default() -> Self {
        VaeSection {
            latent_dim: 1,
            obs_dim: 2,
            true_w: vec![1.5, -0.7],
            true_c: vec![0.2, -0.1],
            true_sigma: 0.4,
            n_train: 2000,
            steps: 900,
            score_updates_per_step: 5,
            batch_size: 128,
            score_batch_size: 128,
            entropy_mc: 4,
            enc_lr: 5e-3,
            dec_lr: 5e-3,
            score_lr: 1e-2,
        }
    }
}
