//! File formats: CSV emission and the checkpoint container.
//!
//! Matrix-shaped outputs (samples, grids) are headerless CSV of floats, one
//! row per line; traces and summaries carry a header line. Floats print in
//! shortest round-trip form so equal runs produce equal bytes.
//!
//! A checkpoint is a plain-text header describing the architecture, the RNG
//! seed, the noise schedule, and the parameter-block manifest, followed by a
//! marker line and the per-stage parameter vectors as little-endian f64.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use scorelab_core::data::{Batch, NoiseSchedule, Rng};
use scorelab_core::field::{ArCsmModel, ModelGraphs};

/// Shortest decimal that round-trips to the same f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn join_floats(row: &[f64]) -> String {
    let mut line = String::new();
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        let _ = write!(line, "{v:?}");
    }
    line
}

/// Headerless float matrix, one sample per line.
pub fn write_matrix_csv<'a>(
    path: &Path,
    rows: impl Iterator<Item = &'a [f64]>,
) -> Result<()> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&join_floats(row));
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_batch_csv(path: &Path, batch: &Batch) -> Result<()> {
    write_matrix_csv(path, batch.rows())
}

/// Headered CSV; rows are preformatted cells.
pub fn write_table_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let cols = header.split(',').count();
    let mut text = String::with_capacity(rows.len() * 24);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        assert_eq!(row.len(), cols, "row width does not match header");
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Architecture hyperparameters of an autoregressive conditional score
/// model, sufficient to rebuild the parameter layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArCsmArch {
    pub dim: usize,
    pub cond_dim: usize,
    pub ctx_dim: usize,
    pub made_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
}

impl ArCsmArch {
    pub fn build(&self, rng: &mut Rng) -> ArCsmModel {
        ArCsmModel::new(
            self.dim,
            self.cond_dim,
            self.ctx_dim,
            &self.made_hidden,
            &self.head_hidden,
            rng,
        )
    }
}

/// Checkpoint payload: the architecture, the seed the run used, the noise
/// schedule, and one parameter vector per stage (widest noise first).
#[derive(Debug)]
pub struct Checkpoint {
    pub arch: ArCsmArch,
    pub seed: u64,
    pub sigmas: Vec<f64>,
    pub stage_params: Vec<Vec<f64>>,
}

const CKPT_MAGIC: &str = "scorelab-checkpoint v1";
const CKPT_MARKER: &str = "---binary---";

fn fmt_usizes(v: &[usize]) -> String {
    if v.is_empty() {
        "-".to_string()
    } else {
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
    }
}

fn parse_usizes(s: &str) -> Result<Vec<usize>> {
    if s.trim() == "-" {
        return Ok(Vec::new());
    }
    s.split_whitespace()
        .map(|t| t.parse::<usize>().with_context(|| format!("bad size {t:?}")))
        .collect()
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let n_params = ckpt.stage_params.first().map_or(0, Vec::len);
    if ckpt.stage_params.is_empty() || n_params == 0 {
        bail!("checkpoint needs at least one non-empty stage parameter vector");
    }
    if ckpt.stage_params.iter().any(|p| p.len() != n_params) {
        bail!("checkpoint stages disagree on parameter count");
    }
    if ckpt.sigmas.len() != ckpt.stage_params.len() {
        bail!(
            "checkpoint has {} schedule levels but {} stages",
            ckpt.sigmas.len(),
            ckpt.stage_params.len()
        );
    }
    // The manifest lists the blocks of a freshly built model so a reader can
    // verify layout compatibility before trusting the payload.
    let probe = ckpt.arch.build(&mut Rng::stream(0, "ckpt-probe", 0));
    if probe.params().len() != n_params {
        bail!(
            "architecture yields {} parameters but checkpoint stores {}",
            probe.params().len(),
            n_params
        );
    }
    let mut head = String::new();
    let _ = writeln!(head, "{CKPT_MAGIC}");
    let _ = writeln!(head, "model ar-csm");
    let _ = writeln!(head, "seed {}", ckpt.seed);
    let _ = writeln!(head, "dim {}", ckpt.arch.dim);
    let _ = writeln!(head, "cond-dim {}", ckpt.arch.cond_dim);
    let _ = writeln!(head, "ctx-dim {}", ckpt.arch.ctx_dim);
    let _ = writeln!(head, "made-hidden {}", fmt_usizes(&ckpt.arch.made_hidden));
    let _ = writeln!(head, "head-hidden {}", fmt_usizes(&ckpt.arch.head_hidden));
    let _ = writeln!(head, "schedule {}", join_floats(&ckpt.sigmas).replace(',', " "));
    let _ = writeln!(head, "stages {}", ckpt.stage_params.len());
    let _ = writeln!(head, "params-per-stage {n_params}");
    for e in probe.params().entries() {
        let _ = writeln!(head, "block {} {} {}", e.name, e.rows, e.cols);
    }
    let _ = writeln!(head, "{CKPT_MARKER}");

    let mut file = std::fs::File::create(path)
        .with_context(|| format!("creating checkpoint {}", path.display()))?;
    file.write_all(head.as_bytes())?;
    let mut payload = Vec::with_capacity(ckpt.stage_params.len() * n_params * 8);
    for stage in &ckpt.stage_params {
        for v in stage {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    file.write_all(&payload)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .with_context(|| format!("opening checkpoint {}", path.display()))?
        .read_to_end(&mut bytes)?;
    let marker = format!("{CKPT_MARKER}\n");
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker.as_bytes())
        .context("checkpoint has no binary marker")?;
    let header = std::str::from_utf8(&bytes[..split]).context("checkpoint header is not UTF-8")?;
    let payload = &bytes[split + marker.len()..];

    let mut lines = header.lines();
    if lines.next() != Some(CKPT_MAGIC) {
        bail!("not a scorelab checkpoint: {}", path.display());
    }
    let mut seed = 0u64;
    let mut dim = 0usize;
    let mut cond_dim = 0usize;
    let mut ctx_dim = 0usize;
    let mut made_hidden = Vec::new();
    let mut head_hidden = Vec::new();
    let mut sigmas: Vec<f64> = Vec::new();
    let mut stages = 0usize;
    let mut n_params = 0usize;
    let mut blocks: Vec<(String, usize, usize)> = Vec::new();
    for line in lines {
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "model" => {
                if rest != "ar-csm" {
                    bail!("unsupported checkpoint model {rest:?}");
                }
            }
            "seed" => seed = rest.parse().context("bad seed")?,
            "dim" => dim = rest.parse().context("bad dim")?,
            "cond-dim" => cond_dim = rest.parse().context("bad cond-dim")?,
            "ctx-dim" => ctx_dim = rest.parse().context("bad ctx-dim")?,
            "made-hidden" => made_hidden = parse_usizes(rest)?,
            "head-hidden" => head_hidden = parse_usizes(rest)?,
            "schedule" => {
                sigmas = rest
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().with_context(|| format!("bad sigma {t:?}")))
                    .collect::<Result<_>>()?;
            }
            "stages" => stages = rest.parse().context("bad stages")?,
            "params-per-stage" => n_params = rest.parse().context("bad params-per-stage")?,
            "block" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    bail!("malformed block line {line:?}");
                }
                blocks.push((parts[0].to_string(), parts[1].parse()?, parts[2].parse()?));
            }
            other => bail!("unknown checkpoint field {other:?}"),
        }
    }
    if dim == 0 || ctx_dim == 0 || stages == 0 || n_params == 0 {
        bail!("checkpoint header is incomplete");
    }
    if sigmas.len() != stages {
        bail!("checkpoint lists {} sigmas for {stages} stages", sigmas.len());
    }
    let arch = ArCsmArch { dim, cond_dim, ctx_dim, made_hidden, head_hidden };
    let probe = arch.build(&mut Rng::stream(0, "ckpt-probe", 0));
    if probe.params().len() != n_params {
        bail!(
            "checkpoint architecture yields {} parameters, header claims {n_params}",
            probe.params().len()
        );
    }
    let manifest: Vec<(String, usize, usize)> = probe
        .params()
        .entries()
        .iter()
        .map(|e| (e.name.clone(), e.rows, e.cols))
        .collect();
    if manifest != blocks {
        bail!("checkpoint block manifest does not match the declared architecture");
    }
    if payload.len() != stages * n_params * 8 {
        bail!(
            "checkpoint payload is {} bytes, expected {}",
            payload.len(),
            stages * n_params * 8
        );
    }
    let mut stage_params = Vec::with_capacity(stages);
    for s in 0..stages {
        let mut v = Vec::with_capacity(n_params);
        for i in 0..n_params {
            let at = (s * n_params + i) * 8;
            let mut b = [0u8; 8];
            b.copy_from_slice(&payload[at..at + 8]);
            let x = f64::from_le_bytes(b);
            if !x.is_finite() {
                bail!("checkpoint stage {s} holds a non-finite parameter");
            }
            v.push(x);
        }
        stage_params.push(v);
    }
    Ok(Checkpoint { arch, seed, sigmas, stage_params })
}

impl Checkpoint {
    /// Rebuild one model per stage with that stage's parameters loaded.
    pub fn stage_models(&self) -> Result<Vec<ArCsmModel>> {
        let mut out = Vec::with_capacity(self.stage_params.len());
        for (s, params) in self.stage_params.iter().enumerate() {
            let mut model = self.arch.build(&mut Rng::stream(0, "ckpt-build", s as u64));
            model
                .params_mut()
                .load(params)
                .map_err(|e| anyhow::anyhow!("loading stage {s}: {e}"))?;
            out.push(model);
        }
        Ok(out)
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::from_sigmas(self.sigmas.clone())
            .map_err(|e| anyhow::anyhow!("checkpoint schedule: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use scorelab_core::field::ModelGraphs;

    #[test]
    fn floats_round_trip_through_text() {
        for v in [0.1, 1.0 / 3.0, 2e-5, -7.25, 1e300, 0.6993157867655625] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn checkpoint_round_trips() {
        let dir = std::env::temp_dir().join("scorelab-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.bin");
        let arch = ArCsmArch {
            dim: 2,
            cond_dim: 0,
            ctx_dim: 5,
            made_hidden: vec![7],
            head_hidden: vec![6],
        };
        let mut rng = Rng::stream(3, "t", 0);
        let m0 = arch.build(&mut rng);
        let m1 = arch.build(&mut rng);
        let ckpt = Checkpoint {
            arch: arch.clone(),
            seed: 99,
            sigmas: vec![1.0, 0.25],
            stage_params: vec![m0.params().values().to_vec(), m1.params().values().to_vec()],
        };
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.arch, arch);
        assert_eq!(back.seed, 99);
        assert_eq!(back.sigmas, vec![1.0, 0.25]);
        assert_eq!(back.stage_params, ckpt.stage_params);
        let models = back.stage_models().unwrap();
        assert_eq!(models[1].params().values(), ckpt.stage_params[1].as_slice());
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dir = std::env::temp_dir().join("scorelab-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("corrupt.bin");
        let arch = ArCsmArch {
            dim: 2,
            cond_dim: 0,
            ctx_dim: 4,
            made_hidden: vec![5],
            head_hidden: vec![],
        };
        let m = arch.build(&mut Rng::stream(1, "t", 0));
        let ckpt = Checkpoint {
            arch,
            seed: 1,
            sigmas: vec![0.5],
            stage_params: vec![m.params().values().to_vec()],
        };
        save_checkpoint(&path, &ckpt).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
