//! Implicit-encoder VAE trained with score-based entropy gradients.
//!
//! The encoder is a sampler z = g_phi(eps, x), eps ~ N(0, I), with the
//! autoregressive constraint that z_d reads only eps_{1..d} (and x). Its
//! conditional density q_phi(z|x) therefore exists but is never evaluated.
//! The ELBO
//!
//!   E_q[log p_theta(x|z)] + E_q[log p(z)] + H[q_phi(z|x)]
//!
//! is still maximizable: the first two terms differentiate directly through
//! the reparameterized draw, and the entropy term uses
//!
//!   dH/dphi = -sum_d E[ s_d(z; x) * dg_d/dphi ],
//!
//! where s is a conditional score of the latent law, treated as a constant
//! (it enters the reverse sweep only as a seed, so no gradient reaches the
//! score parameters). Validity requires s to describe the *current* encoder:
//! every parameter update bumps a version counter, and [`entropy_grad`]
//! rejects scores stamped with an older version via
//! [`Error::StaleScoreModel`].

use alloc::vec::Vec;

use crate::ad::{Binder, NumericParams, ParamBlock, ParamStore, Tape, Value, Var};
use crate::data::{Batch, Rng};
use crate::error::{Error, Result};
use crate::field::{ArCsmModel, ModelGraphs, ScoreField};
use crate::math;
use crate::net::{MadeNet, Mlp};
use crate::objective::{self, ObjectiveKind};
use crate::train::{clip_grad_norm, Adam, AdamConfig, LossTrace, TraceRow};

/// Reparameterized sampler z = g_phi(eps, x) whose d-th output depends only
/// on eps_{1..d} and x. Graphs are recorded on plain `f64` tapes; the VAE
/// never needs x-derivatives of the encoder.
pub trait ImplicitEncoder {
    fn latent_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Monotone counter identifying the current parameter values. Anything
    /// fitted to the encoder's samples must record it.
    fn version(&self) -> u64;
    /// Callers must bump exactly once per parameter update.
    fn bump_version(&mut self);
    /// z = g_phi(eps, x), numerically.
    fn encode(&self, x: &[f64], eps: &[f64]) -> Result<Vec<f64>>;
    /// Record z on `tape` with parameters read from `params`; `x` and `eps`
    /// enter as constants.
    fn encode_graph<'t>(
        &self,
        tape: &'t Tape<f64>,
        params: &Binder<'t, f64>,
        x: &[f64],
        eps: &[f64],
        out: &mut Vec<Var<'t, f64>>,
    ) -> Result<()>;
}

fn check_encode_inputs<E: ImplicitEncoder + ?Sized>(enc: &E, x: &[f64], eps: &[f64]) -> Result<()> {
    if x.len() != enc.obs_dim() {
        return Err(Error::DimensionMismatch {
            what: "encoder observation",
            expected: enc.obs_dim(),
            got: x.len(),
        });
    }
    if eps.len() != enc.latent_dim() {
        return Err(Error::DimensionMismatch {
            what: "encoder noise",
            expected: enc.latent_dim(),
            got: eps.len(),
        });
    }
    if !x.iter().chain(eps.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput { what: "encoder input" });
    }
    Ok(())
}

/// Gaussian sampler z = A x + b + L eps with L lower triangular. The
/// conditional law is N(Ax + b, L L^T), so the score and entropy have closed
/// forms; this is the reference case for the estimator tests and the linear
/// VAE benchmark.
pub struct LinearGaussianEncoder {
    store: ParamStore,
    a: ParamBlock,
    b: ParamBlock,
    l: ParamBlock,
    latent: usize,
    obs: usize,
    version: u64,
}

impl LinearGaussianEncoder {
    /// Small random A and b, L = `l_init` times the identity.
    pub fn new(latent: usize, obs: usize, l_init: f64, rng: &mut Rng) -> Result<Self> {
        if latent == 0 || obs == 0 {
            return Err(Error::InvalidArgument {
                what: alloc::format!("encoder dims must be positive, got {latent}x{obs}"),
            });
        }
        if !(l_init > 0.0) || !l_init.is_finite() {
            return Err(Error::InvalidArgument {
                what: alloc::format!("initial noise scale must be positive, got {l_init}"),
            });
        }
        let mut store = ParamStore::new();
        let a = store.alloc("enc.a", latent, obs, || 0.05 * rng.normal());
        let b = store.alloc("enc.b", latent, 1, || 0.05 * rng.normal());
        let mut k = 0usize;
        let l = store.alloc("enc.l", latent, latent, || {
            let on_diag = k / latent == k % latent;
            k += 1;
            if on_diag { l_init } else { 0.0 }
        });
        Ok(LinearGaussianEncoder { store, a, b, l, latent, obs, version: 0 })
    }

    /// Exact parameter values, row-major; `l` must have positive diagonal
    /// entries (its strict upper triangle is ignored by the map but stored).
    pub fn from_parts(obs: usize, a: &[f64], b: &[f64], l: &[f64]) -> Result<Self> {
        let latent = b.len();
        if latent == 0 || obs == 0 || a.len() != latent * obs || l.len() != latent * latent {
            return Err(Error::InvalidArgument {
                what: alloc::format!(
                    "inconsistent encoder shapes: |a|={}, |b|={}, |l|={}",
                    a.len(),
                    b.len(),
                    l.len()
                ),
            });
        }
        if !a.iter().chain(b.iter()).chain(l.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput { what: "encoder parameters" });
        }
        for d in 0..latent {
            if !(l[d * latent + d] > 0.0) {
                return Err(Error::InvalidArgument {
                    what: alloc::format!("noise map diagonal {d} must be positive"),
                });
            }
        }
        let mut store = ParamStore::new();
        let mut ia = a.iter();
        let ba = store.alloc("enc.a", latent, obs, || *ia.next().unwrap());
        let mut ib = b.iter();
        let bb = store.alloc("enc.b", latent, 1, || *ib.next().unwrap());
        let mut il = l.iter();
        let bl = store.alloc("enc.l", latent, latent, || *il.next().unwrap());
        Ok(LinearGaussianEncoder { store, a: ba, b: bb, l: bl, latent, obs, version: 0 })
    }

    pub fn index_a(&self, r: usize, c: usize) -> usize {
        self.a.at(r, c)
    }
    pub fn index_b(&self, d: usize) -> usize {
        self.b.at(d, 0)
    }
    /// Requires r >= c; entries above the diagonal never enter the map.
    pub fn index_l(&self, r: usize, c: usize) -> usize {
        self.l.at(r, c)
    }

    /// H[N(m, L L^T)] = sum_d ln|l_dd| + (D/2)(ln 2 pi + 1).
    pub fn entropy(&self) -> f64 {
        let vals = self.store.values();
        let mut h = 0.5 * self.latent as f64 * (math::LN_2PI + 1.0);
        for d in 0..self.latent {
            let ldd = vals[self.l.at(d, d)];
            h += math::ln(if ldd < 0.0 { -ldd } else { ldd });
        }
        h
    }

    /// Exact conditional score of the current latent law, stamped with the
    /// current version so later encoder updates invalidate it.
    pub fn score_oracle(&self) -> LinearScoreOracle {
        let vals = self.store.values();
        LinearScoreOracle {
            a: vals[self.a.offset..self.a.offset + self.a.len()].to_vec(),
            b: vals[self.b.offset..self.b.offset + self.b.len()].to_vec(),
            l: vals[self.l.offset..self.l.offset + self.l.len()].to_vec(),
            latent: self.latent,
            obs: self.obs,
            version: self.version,
        }
    }
}

impl ImplicitEncoder for LinearGaussianEncoder {
    fn latent_dim(&self) -> usize {
        self.latent
    }
    fn obs_dim(&self) -> usize {
        self.obs
    }
    fn params(&self) -> &ParamStore {
        &self.store
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn version(&self) -> u64 {
        self.version
    }
    fn bump_version(&mut self) {
        self.version += 1;
    }

    fn encode(&self, x: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
        check_encode_inputs(self, x, eps)?;
        let v = self.store.values();
        let mut z = Vec::with_capacity(self.latent);
        for d in 0..self.latent {
            let mut acc = v[self.b.at(d, 0)];
            for (j, xj) in x.iter().enumerate() {
                acc += v[self.a.at(d, j)] * xj;
            }
            for (e, ee) in eps.iter().enumerate().take(d + 1) {
                acc += v[self.l.at(d, e)] * ee;
            }
            z.push(acc);
        }
        Ok(z)
    }

    fn encode_graph<'t>(
        &self,
        _tape: &'t Tape<f64>,
        params: &Binder<'t, f64>,
        x: &[f64],
        eps: &[f64],
        out: &mut Vec<Var<'t, f64>>,
    ) -> Result<()> {
        check_encode_inputs(self, x, eps)?;
        out.clear();
        for d in 0..self.latent {
            let mut acc = params.var(self.b.at(d, 0));
            for (j, xj) in x.iter().enumerate() {
                acc = acc + params.var(self.a.at(d, j)) * *xj;
            }
            for (e, ee) in eps.iter().enumerate().take(d + 1) {
                acc = acc + params.var(self.l.at(d, e)) * *ee;
            }
            out.push(acc);
        }
        Ok(())
    }
}

/// Nonlinear implicit encoder: a masked context network over eps
/// (conditioned on x) feeds a shared per-dimension head, so
/// z_d = h([c_d, eps_d]) reads exactly eps_{1..d} and x.
pub struct ArEncoder {
    store: ParamStore,
    made: MadeNet,
    head: Mlp,
    ctx_dim: usize,
    latent: usize,
    obs: usize,
    version: u64,
}

impl ArEncoder {
    pub fn new(
        latent: usize,
        obs: usize,
        ctx_dim: usize,
        made_hidden: &[usize],
        head_hidden: &[usize],
        rng: &mut Rng,
    ) -> ArEncoder {
        let mut store = ParamStore::new();
        let made = MadeNet::new(&mut store, "enc.ctx", latent, obs, made_hidden, ctx_dim, rng);
        let head = Mlp::new(&mut store, "enc.head", ctx_dim + 1, head_hidden, 1, rng);
        ArEncoder { store, made, head, ctx_dim, latent, obs, version: 0 }
    }
}

impl ImplicitEncoder for ArEncoder {
    fn latent_dim(&self) -> usize {
        self.latent
    }
    fn obs_dim(&self) -> usize {
        self.obs
    }
    fn params(&self) -> &ParamStore {
        &self.store
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn version(&self) -> u64 {
        self.version
    }
    fn bump_version(&mut self) {
        self.version += 1;
    }

    fn encode(&self, x: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
        check_encode_inputs(self, x, eps)?;
        let pv = NumericParams::<f64>::new(&self.store);
        let mut ctxs = Vec::new();
        self.made.context(&pv, eps, x, &mut ctxs);
        let mut z = Vec::with_capacity(self.latent);
        let mut head_in = Vec::with_capacity(self.ctx_dim + 1);
        let mut head_out = Vec::new();
        for d in 0..self.latent {
            head_in.clear();
            head_in.extend_from_slice(&ctxs[d * self.ctx_dim..(d + 1) * self.ctx_dim]);
            head_in.push(eps[d]);
            self.head.eval(&pv, &head_in, &mut head_out);
            z.push(head_out[0]);
        }
        Ok(z)
    }

    fn encode_graph<'t>(
        &self,
        tape: &'t Tape<f64>,
        params: &Binder<'t, f64>,
        x: &[f64],
        eps: &[f64],
        out: &mut Vec<Var<'t, f64>>,
    ) -> Result<()> {
        check_encode_inputs(self, x, eps)?;
        let eps_vars: Vec<Var<'t, f64>> = eps.iter().map(|&e| tape.leaf(e)).collect();
        let x_vars: Vec<Var<'t, f64>> = x.iter().map(|&v| tape.leaf(v)).collect();
        let mut ctxs = Vec::new();
        self.made.context(params, &eps_vars, &x_vars, &mut ctxs);
        out.clear();
        let mut head_in = Vec::with_capacity(self.ctx_dim + 1);
        let mut head_out = Vec::new();
        for d in 0..self.latent {
            head_in.clear();
            head_in.extend_from_slice(&ctxs[d * self.ctx_dim..(d + 1) * self.ctx_dim]);
            head_in.push(eps_vars[d]);
            self.head.eval(params, &head_in, &mut head_out);
            out.push(head_out[0]);
        }
        Ok(())
    }
}

/// Observation model p_theta(x|z) = N(f_theta(z), sigma_o^2 I): a small
/// dense net for the mean plus one learned log sigma_o shared across output
/// dimensions. With empty `hidden` the mean is affine, which is the family
/// whose marginal likelihood the linear benchmark evaluates in closed form.
pub struct Decoder {
    store: ParamStore,
    mlp: Mlp,
    log_sigma: ParamBlock,
    latent: usize,
    obs: usize,
}

impl Decoder {
    pub fn new(
        latent: usize,
        obs: usize,
        hidden: &[usize],
        sigma_init: f64,
        rng: &mut Rng,
    ) -> Result<Decoder> {
        if latent == 0 || obs == 0 {
            return Err(Error::InvalidArgument {
                what: alloc::format!("decoder dims must be positive, got {latent}x{obs}"),
            });
        }
        if !(sigma_init > 0.0) || !sigma_init.is_finite() {
            return Err(Error::InvalidArgument {
                what: alloc::format!("initial observation noise must be positive, got {sigma_init}"),
            });
        }
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "dec", latent, hidden, obs, rng);
        let log_sigma = store.alloc("dec.log_sigma", 1, 1, || math::ln(sigma_init));
        Ok(Decoder { store, mlp, log_sigma, latent, obs })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }
    pub fn obs_dim(&self) -> usize {
        self.obs
    }
    pub fn params(&self) -> &ParamStore {
        &self.store
    }
    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    pub fn obs_sigma(&self) -> f64 {
        math::exp(self.store.values()[self.log_sigma.offset])
    }

    /// Mean reconstruction f_theta(z).
    pub fn mean(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent {
            return Err(Error::DimensionMismatch {
                what: "decoder latent",
                expected: self.latent,
                got: z.len(),
            });
        }
        let pv = NumericParams::<f64>::new(&self.store);
        let mut out = Vec::new();
        self.mlp.eval(&pv, z, &mut out);
        Ok(out)
    }

    pub fn log_lik(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        if x.len() != self.obs {
            return Err(Error::DimensionMismatch {
                what: "decoder observation",
                expected: self.obs,
                got: x.len(),
            });
        }
        let m = self.mean(z)?;
        let t = self.store.values()[self.log_sigma.offset];
        let inv_var = math::exp(-2.0 * t);
        let sq: f64 = m.iter().zip(x.iter()).map(|(mi, xi)| (mi - xi) * (mi - xi)).sum();
        Ok(-0.5 * inv_var * sq - self.obs as f64 * (t + 0.5 * math::LN_2PI))
    }

    /// Graph of log p(x|z); `z` must already live on the binder's tape.
    pub fn log_lik_graph<'t>(
        &self,
        params: &Binder<'t, f64>,
        z: &[Var<'t, f64>],
        x: &[f64],
    ) -> Var<'t, f64> {
        debug_assert_eq!(z.len(), self.latent);
        debug_assert_eq!(x.len(), self.obs);
        let mut mean = Vec::new();
        self.mlp.eval(params, z, &mut mean);
        let t = params.var(self.log_sigma.offset);
        let inv_var = (t * (-2.0)).exp();
        let mut sq = (mean[0] - x[0]).square();
        for d in 1..self.obs {
            sq = sq + (mean[d] - x[d]).square();
        }
        sq * (-0.5) * inv_var - (t + 0.5 * math::LN_2PI) * self.obs as f64
    }
}

/// Conditional score of the latent given the observation, as consumed by
/// [`entropy_grad`]. Implementations return plain numbers; the estimator
/// never differentiates through them.
pub trait LatentScore {
    fn latent_dim(&self) -> usize;
    /// s_d = d/dz_d log q(z_d | z_{<d}, x) for every d.
    fn scores(&self, z: &[f64], x: &[f64], out: &mut Vec<f64>) -> Result<()>;
    /// Encoder version the scores were fitted against; `None` means the
    /// implementation is analytically exact for any parameters.
    fn fitted_version(&self) -> Option<u64>;
}

/// Closed-form latent score for [`LinearGaussianEncoder`]: forward-solving
/// L eps = z - Ax - b gives the per-dimension conditional score
/// s_d = -eps_d / l_dd.
pub struct LinearScoreOracle {
    a: Vec<f64>,
    b: Vec<f64>,
    l: Vec<f64>,
    latent: usize,
    obs: usize,
    version: u64,
}

impl LatentScore for LinearScoreOracle {
    fn latent_dim(&self) -> usize {
        self.latent
    }

    fn scores(&self, z: &[f64], x: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if z.len() != self.latent || x.len() != self.obs {
            return Err(Error::DimensionMismatch {
                what: "latent score inputs",
                expected: self.latent + self.obs,
                got: z.len() + x.len(),
            });
        }
        let mut eps = Vec::with_capacity(self.latent);
        out.clear();
        for d in 0..self.latent {
            let mut m = self.b[d];
            for (j, xj) in x.iter().enumerate() {
                m += self.a[d * self.obs + j] * xj;
            }
            for (e, ee) in eps.iter().enumerate() {
                m += self.l[d * self.latent + e] * *ee;
            }
            let ldd = self.l[d * self.latent + d];
            let ed = (z[d] - m) / ldd;
            eps.push(ed);
            out.push(-ed / ldd);
        }
        Ok(())
    }

    fn fitted_version(&self) -> Option<u64> {
        Some(self.version)
    }
}

/// A trained conditional score model stamped with the encoder version whose
/// samples it was last fitted on.
pub struct FittedScore<'a> {
    pub model: &'a ArCsmModel,
    pub fitted: u64,
}

impl LatentScore for FittedScore<'_> {
    fn latent_dim(&self) -> usize {
        ModelGraphs::dim(self.model)
    }
    fn scores(&self, z: &[f64], x: &[f64], out: &mut Vec<f64>) -> Result<()> {
        let s = self.model.scores_given(z, x)?;
        out.clear();
        out.extend_from_slice(&s);
        Ok(())
    }
    fn fitted_version(&self) -> Option<u64> {
        Some(self.fitted)
    }
}

/// Analytic score field used as an always-fresh latent score; ignores the
/// observation.
pub struct OracleScore<'a>(pub &'a dyn ScoreField);

impl LatentScore for OracleScore<'_> {
    fn latent_dim(&self) -> usize {
        self.0.dim()
    }
    fn scores(&self, z: &[f64], _x: &[f64], out: &mut Vec<f64>) -> Result<()> {
        let s = self.0.score_all(z)?;
        out.clear();
        out.extend_from_slice(&s);
        Ok(())
    }
    fn fitted_version(&self) -> Option<u64> {
        None
    }
}

/// Monte Carlo gradient of the mean encoder entropy over the rows of `xs`:
///
///   dH/dphi ~= -(1/(N K)) sum_{x, k} sum_d s_d(z^k; x) dz^k_d/dphi,
///
/// K = `n_mc` draws per row. Scores enter only as reverse-sweep seeds, so
/// the estimate depends on the score model's values but routes no gradient
/// into it. Fails with [`Error::StaleScoreModel`] if `score` was fitted to an
/// older encoder version.
pub fn entropy_grad<E: ImplicitEncoder + ?Sized, S: LatentScore + ?Sized>(
    encoder: &E,
    score: &S,
    xs: &Batch,
    n_mc: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if let Some(fitted) = score.fitted_version() {
        let current = encoder.version();
        if fitted != current {
            return Err(Error::StaleScoreModel { fitted, current });
        }
    }
    if n_mc == 0 {
        return Err(Error::InvalidArgument {
            what: alloc::string::String::from("entropy gradient needs at least one draw per row"),
        });
    }
    if xs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if xs.dim() != encoder.obs_dim() {
        return Err(Error::DimensionMismatch {
            what: "entropy gradient batch",
            expected: encoder.obs_dim(),
            got: xs.dim(),
        });
    }
    let lat = encoder.latent_dim();
    if score.latent_dim() != lat {
        return Err(Error::DimensionMismatch {
            what: "latent score dimension",
            expected: lat,
            got: score.latent_dim(),
        });
    }

    let tape: Tape<f64> = Tape::new();
    let binder = Binder::bind(&tape, encoder.params());
    let scale = -1.0 / (xs.len() * n_mc) as f64;
    let mut eps = alloc::vec![0.0; lat];
    let mut zvars: Vec<Var<'_, f64>> = Vec::new();
    let mut zvals: Vec<f64> = Vec::with_capacity(lat);
    let mut svals: Vec<f64> = Vec::new();
    let mut seeds: Vec<(Var<'_, f64>, f64)> = Vec::with_capacity(xs.len() * n_mc * lat);
    for x in xs.rows() {
        for _ in 0..n_mc {
            rng.fill_normal(&mut eps);
            encoder.encode_graph(&tape, &binder, x, &eps, &mut zvars)?;
            if zvars.len() != lat {
                return Err(Error::DimensionMismatch {
                    what: "encoder outputs",
                    expected: lat,
                    got: zvars.len(),
                });
            }
            zvals.clear();
            zvals.extend(zvars.iter().map(|v| v.value()));
            score.scores(&zvals, x, &mut svals)?;
            if svals.len() != lat || !svals.iter().all(|s| s.is_finite()) {
                return Err(Error::NonFiniteInput { what: "latent score" });
            }
            for d in 0..lat {
                seeds.push((zvars[d], svals[d] * scale));
            }
        }
    }
    let adj = tape.backward_seeded(&seeds);
    let mut out = alloc::vec![0.0; binder.len()];
    binder.collect_adjoints(&adj, |a| a, &mut out);
    Ok(out)
}

/// (1/N) sum_i ||x_i - f_theta(g_phi(eps_i, x_i))||^2 with one noise draw
/// per row.
pub fn reconstruction_mse<E: ImplicitEncoder + ?Sized>(
    encoder: &E,
    decoder: &Decoder,
    data: &Batch,
    rng: &mut Rng,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if data.dim() != encoder.obs_dim() || decoder.obs_dim() != encoder.obs_dim() {
        return Err(Error::DimensionMismatch {
            what: "reconstruction batch",
            expected: encoder.obs_dim(),
            got: data.dim(),
        });
    }
    let mut eps = alloc::vec![0.0; encoder.latent_dim()];
    let mut acc = 0.0;
    for x in data.rows() {
        rng.fill_normal(&mut eps);
        let z = encoder.encode(x, &eps)?;
        let m = decoder.mean(&z)?;
        acc += m.iter().zip(x.iter()).map(|(mi, xi)| (mi - xi) * (mi - xi)).sum::<f64>();
    }
    Ok(acc / data.len() as f64)
}

#[derive(Debug, Clone)]
pub struct VaeConfig {
    /// ELBO ascent steps.
    pub steps: usize,
    /// Score-model refits per ELBO step; must be at least 1 so the score is
    /// never stale when the entropy gradient runs.
    pub score_updates_per_step: usize,
    /// Rows per ELBO minibatch.
    pub batch_size: usize,
    /// Rows per score refit minibatch.
    pub score_batch_size: usize,
    /// Monte Carlo draws per row inside the entropy gradient.
    pub entropy_mc: usize,
    pub enc_adam: AdamConfig,
    pub dec_adam: AdamConfig,
    pub score_adam: AdamConfig,
    pub grad_clip: Option<f64>,
}

impl Default for VaeConfig {
    fn default() -> Self {
        let adam = AdamConfig { lr: 5e-3, ..AdamConfig::default() };
        VaeConfig {
            steps: 300,
            score_updates_per_step: 5,
            batch_size: 128,
            score_batch_size: 128,
            entropy_mc: 4,
            enc_adam: adam,
            dec_adam: adam,
            score_adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
            grad_clip: Some(100.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VaeTraceRow {
    pub step: usize,
    /// Minibatch mean E_q[log p(x|z)].
    pub recon: f64,
    /// Minibatch mean log p(z).
    pub prior: f64,
    /// Loss of the last score refit at this step.
    pub score_loss: f64,
}

#[derive(Debug, Clone)]
pub struct VaeResult {
    pub trace: Vec<VaeTraceRow>,
    pub initial_recon_mse: f64,
    pub final_recon_mse: f64,
}

fn sample_rows(data: &Batch, k: usize, rng: &mut Rng) -> Batch {
    let mut rows = Vec::with_capacity(k * data.dim());
    for _ in 0..k {
        rows.extend_from_slice(data.row(rng.below(data.len())));
    }
    Batch::from_vec(rows, data.dim())
}

fn draw_latent_batch<E: ImplicitEncoder + ?Sized>(
    encoder: &E,
    data: &Batch,
    k: usize,
    rng: &mut Rng,
) -> Result<Batch> {
    let (obs, lat) = (encoder.obs_dim(), encoder.latent_dim());
    let mut rows = Vec::with_capacity(k * (obs + lat));
    let mut eps = alloc::vec![0.0; lat];
    for _ in 0..k {
        let x = data.row(rng.below(data.len()));
        rng.fill_normal(&mut eps);
        let z = encoder.encode(x, &eps)?;
        rows.extend_from_slice(x);
        rows.extend_from_slice(&z);
    }
    Ok(Batch::from_vec(rows, obs + lat))
}

fn vae_diverged(trace: &[VaeTraceRow], step: usize) -> Error {
    let mut t = LossTrace::new();
    for r in trace {
        t.push(TraceRow {
            stage: 0,
            epoch: r.step,
            iteration: r.step,
            loss: -(r.recon + r.prior),
            elapsed_secs: 0.0,
        });
    }
    Error::TrainingDiverged { stage: 0, iteration: step, trace: t }
}

/// Alternating optimization: each step runs `score_updates_per_step`
/// composite score-matching refits of `score_model` on fresh `[x | z]` draws
/// from the current encoder, then one ascent step on
/// E_q[log p(x|z)] + log p(z) + H, with the entropy direction supplied by
/// [`entropy_grad`] against the just-refitted scores. The encoder version is
/// bumped after its update, so a score model carried across steps without a
/// refit would be rejected as stale.
pub fn train_vae<E: ImplicitEncoder + ?Sized>(
    encoder: &mut E,
    decoder: &mut Decoder,
    score_model: &mut ArCsmModel,
    data: &Batch,
    cfg: &VaeConfig,
    rng: &mut Rng,
) -> Result<VaeResult> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (obs, lat) = (encoder.obs_dim(), encoder.latent_dim());
    if data.dim() != obs || decoder.obs_dim() != obs || score_model.cond_dim() != obs {
        return Err(Error::DimensionMismatch {
            what: "observation dimension",
            expected: obs,
            got: data.dim(),
        });
    }
    if decoder.latent_dim() != lat || ModelGraphs::dim(score_model) != lat {
        return Err(Error::DimensionMismatch {
            what: "latent dimension",
            expected: lat,
            got: ModelGraphs::dim(score_model),
        });
    }
    if cfg.score_updates_per_step == 0
        || cfg.batch_size == 0
        || cfg.score_batch_size == 0
        || cfg.entropy_mc == 0
    {
        return Err(Error::InvalidArgument {
            what: alloc::string::String::from("batch sizes and update counts must be positive"),
        });
    }

    let initial_recon_mse = reconstruction_mse(encoder, decoder, data, rng)?;
    let mut adam_enc = Adam::new(cfg.enc_adam, encoder.params().len());
    let mut adam_dec = Adam::new(cfg.dec_adam, decoder.params().len());
    let mut adam_score = Adam::new(cfg.score_adam, score_model.params().len());
    let mut g_enc = alloc::vec![0.0; encoder.params().len()];
    let mut g_dec = alloc::vec![0.0; decoder.params().len()];
    let mut g_score = alloc::vec![0.0; score_model.params().len()];
    let mut eps = alloc::vec![0.0; lat];
    let mut trace: Vec<VaeTraceRow> = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        // (a) Refit the latent score to the current encoder.
        let mut score_loss = 0.0;
        for _ in 0..cfg.score_updates_per_step {
            let zbatch = draw_latent_batch(encoder, data, cfg.score_batch_size, rng)?;
            score_loss = objective::loss_grad(
                score_model,
                &zbatch,
                ObjectiveKind::Csm,
                (0.0, 0.0),
                rng,
                &mut g_score,
            )?;
            if !score_loss.is_finite() {
                return Err(vae_diverged(&trace, step));
            }
            if let Some(c) = cfg.grad_clip {
                clip_grad_norm(&mut g_score, c);
            }
            adam_score.step(score_model.params_mut().values_mut(), &g_score);
        }
        let fitted = FittedScore { model: score_model, fitted: encoder.version() };

        // (b) One ELBO ascent step; drop the tape before touching parameters.
        let xbatch = sample_rows(data, cfg.batch_size, rng);
        let (recon, prior) = {
            let tape: Tape<f64> = Tape::new();
            let b_enc = Binder::bind(&tape, encoder.params());
            let b_dec = Binder::bind(&tape, decoder.params());
            let scale = -1.0 / xbatch.len() as f64;
            let mut seeds = Vec::with_capacity(xbatch.len());
            let mut zvars: Vec<Var<'_, f64>> = Vec::new();
            let (mut recon_sum, mut prior_sum) = (0.0, 0.0);
            for x in xbatch.rows() {
                rng.fill_normal(&mut eps);
                encoder.encode_graph(&tape, &b_enc, x, &eps, &mut zvars)?;
                let ll = decoder.log_lik_graph(&b_dec, &zvars, x);
                let mut sq = zvars[0].square();
                for zd in zvars.iter().skip(1) {
                    sq = sq + zd.square();
                }
                let prior = sq * (-0.5) - 0.5 * lat as f64 * math::LN_2PI;
                recon_sum += ll.value();
                prior_sum += prior.value();
                seeds.push((ll + prior, scale));
            }
            let adj = tape.backward_seeded(&seeds);
            b_enc.collect_adjoints(&adj, |a| a, &mut g_enc);
            b_dec.collect_adjoints(&adj, |a| a, &mut g_dec);
            let n = xbatch.len() as f64;
            (recon_sum / n, prior_sum / n)
        };
        if !recon.is_finite() || !prior.is_finite() {
            return Err(vae_diverged(&trace, step));
        }
        // Ascend the entropy: subtract dH/dphi from the descent gradient.
        let ent = entropy_grad(encoder, &fitted, &xbatch, cfg.entropy_mc, rng)?;
        for (g, e) in g_enc.iter_mut().zip(ent.iter()) {
            *g -= *e;
        }
        if let Some(c) = cfg.grad_clip {
            clip_grad_norm(&mut g_enc, c);
            clip_grad_norm(&mut g_dec, c);
        }
        adam_enc.step(encoder.params_mut().values_mut(), &g_enc);
        encoder.bump_version();
        adam_dec.step(decoder.params_mut().values_mut(), &g_dec);
        trace.push(VaeTraceRow { step, recon, prior, score_loss });
    }

    let final_recon_mse = reconstruction_mse(encoder, decoder, data, rng)?;
    Ok(VaeResult { trace, initial_recon_mse, final_recon_mse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdcheck::assert_all_close;

    #[test]
    fn linear_encoder_graph_matches_numeric_and_is_autoregressive() {
        let mut rng = Rng::stream(11, "vae-test", 0);
        let enc = LinearGaussianEncoder::new(3, 2, 0.7, &mut rng).unwrap();
        let x = [0.4, -1.1];
        let eps = [0.3, -0.2, 1.5];
        let z = enc.encode(&x, &eps).unwrap();

        let tape: Tape<f64> = Tape::new();
        let binder = Binder::bind(&tape, enc.params());
        let mut zvars = Vec::new();
        enc.encode_graph(&tape, &binder, &x, &eps, &mut zvars).unwrap();
        for (zi, zv) in z.iter().zip(zvars.iter()) {
            assert_all_close(&[*zi], &[zv.value()], 1e-15, 1e-12, "encoder graph");
        }

        // Bumping eps_j must leave every z_d with d < j bitwise unchanged.
        for j in 0..3 {
            let mut eps2 = eps;
            eps2[j] += 0.9;
            let z2 = enc.encode(&x, &eps2).unwrap();
            for d in 0..j {
                assert_eq!(z[d], z2[d]);
            }
            assert_ne!(z[j], z2[j]);
        }
    }

    #[test]
    fn ar_encoder_graph_matches_numeric_and_is_autoregressive() {
        let mut rng = Rng::stream(12, "vae-test", 0);
        let enc = ArEncoder::new(3, 2, 4, &[6], &[5], &mut rng);
        let x = [0.2, 0.8];
        let eps = [-0.4, 0.1, 0.9];
        let z = enc.encode(&x, &eps).unwrap();

        let tape: Tape<f64> = Tape::new();
        let binder = Binder::bind(&tape, enc.params());
        let mut zvars = Vec::new();
        enc.encode_graph(&tape, &binder, &x, &eps, &mut zvars).unwrap();
        for (zi, zv) in z.iter().zip(zvars.iter()) {
            assert_all_close(&[*zi], &[zv.value()], 1e-12, 1e-12, "encoder graph");
        }

        for j in 0..3 {
            let mut eps2 = eps;
            eps2[j] = 2.0;
            let z2 = enc.encode(&x, &eps2).unwrap();
            for d in 0..j {
                assert_eq!(z[d], z2[d]);
            }
        }
        // x reaches every output.
        let z3 = enc.encode(&[0.2, -0.8], &eps).unwrap();
        for d in 0..3 {
            assert_ne!(z[d], z3[d]);
        }
    }

    #[test]
    fn decoder_graph_matches_numeric_and_finite_differences() {
        let mut rng = Rng::stream(13, "vae-test", 0);
        let mut dec = Decoder::new(2, 2, &[4], 0.7, &mut rng).unwrap();
        let z = [0.3, -0.6];
        let x = [1.0, 0.2];
        let ll = dec.log_lik(&x, &z).unwrap();

        let mut grad = alloc::vec![0.0; dec.params().len()];
        {
            let tape: Tape<f64> = Tape::new();
            let binder = Binder::bind(&tape, dec.params());
            let zvars: Vec<Var<'_, f64>> = z.iter().map(|&v| tape.leaf(v)).collect();
            let out = dec.log_lik_graph(&binder, &zvars, &x);
            assert_all_close(&[ll], &[out.value()], 1e-15, 1e-12, "decoder graph");
            let adj = tape.backward(out);
            binder.collect_adjoints(&adj, |a| a, &mut grad);
        }

        let h = 1e-5;
        for i in 0..dec.params().len() {
            let orig = dec.params().values()[i];
            dec.params_mut().values_mut()[i] = orig + h;
            let up = dec.log_lik(&x, &z).unwrap();
            dec.params_mut().values_mut()[i] = orig - h;
            let dn = dec.log_lik(&x, &z).unwrap();
            dec.params_mut().values_mut()[i] = orig;
            assert_all_close(&[(up - dn) / (2.0 * h)], &[grad[i]], 1e-6, 1e-6, "decoder grad");
        }
    }

    #[test]
    fn entropy_gradient_recovers_scale_and_ignores_shift() {
        // z = 0.3 + 0.5 eps: dH/dl = 1/0.5 = 2, dH/db = 0, and dH/da is
        // exactly 0 because x = 0 blocks that path structurally.
        let enc = LinearGaussianEncoder::from_parts(1, &[0.0], &[0.3], &[0.5]).unwrap();
        let oracle = enc.score_oracle();
        let xs = Batch::from_vec(alloc::vec![0.0], 1);
        let mut rng = Rng::stream(21, "vae-test", 0);
        let g = entropy_grad(&enc, &oracle, &xs, 10_000, &mut rng).unwrap();
        // Per-draw terms are eps^2/l (var 8) and eps/l (var 4); bounds are
        // a little over 3 SE at 10^4 draws.
        assert!((g[enc.index_l(0, 0)] - 2.0).abs() < 0.1, "dH/dl = {}", g[enc.index_l(0, 0)]);
        assert!(g[enc.index_b(0)].abs() < 0.07, "dH/db = {}", g[enc.index_b(0)]);
        assert_eq!(g[enc.index_a(0, 0)], 0.0);
    }

    #[test]
    fn entropy_gradient_matches_analytic_form_in_two_dims() {
        // H depends only on the diagonal of L: dH/dl_dd = 1/l_dd, zero for
        // the strict lower triangle, the bias, and the conditioning map.
        let enc = LinearGaussianEncoder::from_parts(
            1,
            &[0.2, -0.1],
            &[0.4, -0.3],
            &[0.8, 0.0, 0.3, 1.2],
        )
        .unwrap();
        let oracle = enc.score_oracle();
        let xs = Batch::from_vec(alloc::vec![0.5], 1);
        let mut rng = Rng::stream(22, "vae-test", 0);
        let g = entropy_grad(&enc, &oracle, &xs, 100_000, &mut rng).unwrap();
        // 3 SE at 10^5 draws is at most ~0.017 for each entry; use 0.05.
        assert!((g[enc.index_l(0, 0)] - 1.25).abs() < 0.05);
        assert!((g[enc.index_l(1, 1)] - 1.0 / 1.2).abs() < 0.05);
        assert!(g[enc.index_l(1, 0)].abs() < 0.05);
        assert!(g[enc.index_b(0)].abs() < 0.05);
        assert!(g[enc.index_b(1)].abs() < 0.05);
        assert!(g[enc.index_a(0, 0)].abs() < 0.05);
        assert!(g[enc.index_a(1, 0)].abs() < 0.05);
    }

    #[test]
    fn stale_score_model_is_rejected() {
        let mut enc = LinearGaussianEncoder::from_parts(1, &[0.0], &[0.0], &[1.0]).unwrap();
        let oracle = enc.score_oracle();
        enc.bump_version();
        let xs = Batch::from_vec(alloc::vec![0.0], 1);
        let mut rng = Rng::stream(23, "vae-test", 0);
        match entropy_grad(&enc, &oracle, &xs, 4, &mut rng) {
            Err(Error::StaleScoreModel { fitted, current }) => {
                assert_eq!(fitted, 0);
                assert_eq!(current, 1);
            }
            other => panic!("expected stale-score error, got {other:?}"),
        }
    }

    #[test]
    fn score_values_steer_the_estimate_but_receive_no_gradient() {
        let mut rng = Rng::stream(24, "vae-test", 0);
        let enc = LinearGaussianEncoder::from_parts(1, &[0.1], &[0.0], &[1.0]).unwrap();
        let mut model = ArCsmModel::new(1, 1, 4, &[6], &[5], &mut rng);
        let xs = Batch::from_vec(alloc::vec![0.4], 1);

        let fitted = FittedScore { model: &model, fitted: enc.version() };
        let mut r1 = Rng::stream(25, "vae-test", 0);
        let g1 = entropy_grad(&enc, &fitted, &xs, 64, &mut r1).unwrap();
        // The returned gradient covers encoder parameters only; the score
        // model is outside the graph by construction.
        assert_eq!(g1.len(), enc.params().len());
        let mut r1b = Rng::stream(25, "vae-test", 0);
        let g1b = entropy_grad(&enc, &fitted, &xs, 64, &mut r1b).unwrap();
        assert_eq!(g1, g1b);

        for v in model.params_mut().values_mut() {
            *v += 0.1;
        }
        let refitted = FittedScore { model: &model, fitted: enc.version() };
        let mut r2 = Rng::stream(25, "vae-test", 0);
        let g2 = entropy_grad(&enc, &refitted, &xs, 64, &mut r2).unwrap();
        assert!(
            g1.iter().zip(g2.iter()).any(|(a, b)| (a - b).abs() > 1e-9),
            "score values must change the estimate"
        );
    }

    #[test]
    fn train_vae_improves_reconstruction_on_a_linear_problem() {
        let mut rng = Rng::stream(26, "vae-test", 0);
        // x = w z + c + 0.3 n with z ~ N(0,1), in two observed dimensions.
        let n = 256;
        let mut rows = Vec::with_capacity(n * 2);
        for _ in 0..n {
            let z = rng.normal();
            rows.push(1.5 * z + 0.2 + 0.3 * rng.normal());
            rows.push(-0.7 * z - 0.1 + 0.3 * rng.normal());
        }
        let data = Batch::from_vec(rows, 2);

        let mut enc = LinearGaussianEncoder::new(1, 2, 1.0, &mut rng).unwrap();
        let mut dec = Decoder::new(1, 2, &[], 1.0, &mut rng).unwrap();
        let mut score = ArCsmModel::new(1, 2, 4, &[6], &[5], &mut rng);
        let cfg = VaeConfig {
            steps: 60,
            batch_size: 64,
            score_batch_size: 64,
            entropy_mc: 2,
            enc_adam: AdamConfig { lr: 2e-2, ..AdamConfig::default() },
            dec_adam: AdamConfig { lr: 2e-2, ..AdamConfig::default() },
            ..VaeConfig::default()
        };
        let res = train_vae(&mut enc, &mut dec, &mut score, &data, &cfg, &mut rng).unwrap();
        assert_eq!(res.trace.len(), 60);
        assert!(res.trace.iter().all(|r| r.recon.is_finite() && r.prior.is_finite()));
        assert!(
            res.final_recon_mse < res.initial_recon_mse,
            "mse {} -> {}",
            res.initial_recon_mse,
            res.final_recon_mse
        );
        assert_eq!(enc.version(), 60);
    }

    #[test]
    fn train_vae_rejects_mismatched_score_model() {
        let mut rng = Rng::stream(27, "vae-test", 0);
        let mut enc = LinearGaussianEncoder::new(1, 2, 1.0, &mut rng).unwrap();
        let mut dec = Decoder::new(1, 2, &[], 1.0, &mut rng).unwrap();
        // Score model conditioned on the wrong observation width.
        let mut score = ArCsmModel::new(1, 1, 4, &[6], &[5], &mut rng);
        let data = Batch::from_vec(alloc::vec![0.0, 0.0, 1.0, 1.0], 2);
        let cfg = VaeConfig { steps: 1, ..VaeConfig::default() };
        assert!(matches!(
            train_vae(&mut enc, &mut dec, &mut score, &data, &cfg, &mut rng),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
