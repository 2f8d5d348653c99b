//! Network building blocks shared by the learned fields and the VAE.
//!
//! Layers are written once over the [`Value`] algebra, so the same code
//! records a tape graph during training and runs as a plain forward pass at
//! sampling time. Masked layers realize the autoregressive property: unit
//! degrees are assigned at construction and a connection exists only where
//! the degree ordering allows it, so output block `d` can never see inputs
//! with degree `>= d` (strict final mask). Conditioning inputs carry degree
//! zero and are visible everywhere.

use alloc::format;
use alloc::vec::Vec;

use crate::ad::{ParamBlock, ParamStore, ParamView, Value};
use crate::data::Rng;
use crate::math;

// ── dense layer ──────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct Dense {
    w: ParamBlock,
    b: ParamBlock,
    in_dim: usize,
    out_dim: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Dense {
        let scale = 1.0 / math::sqrt(in_dim.max(1) as f64);
        let w = store.alloc(&format!("{name}.w"), out_dim, in_dim, || rng.normal() * scale);
        let b = store.alloc(&format!("{name}.b"), out_dim, 1, || 0.0);
        Dense { w, b, in_dim, out_dim }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn eval<V: Value>(&self, pv: &impl ParamView<V>, x: &[V], out: &mut Vec<V>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        let mut wrow: Vec<V> = Vec::with_capacity(self.in_dim);
        for r in 0..self.out_dim {
            wrow.clear();
            for c in 0..self.in_dim {
                wrow.push(pv.p(self.w.at(r, c)));
            }
            out.push(V::affine(pv.p(self.b.at(r, 0)), &wrow, x));
        }
    }
}

// ── degree-masked layer ──────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct MaskedDense {
    /// Packed weights: only allowed connections are parameters at all.
    w: ParamBlock,
    b: ParamBlock,
    in_dim: usize,
    out_dim: usize,
    /// Allowed input indices, concatenated per output unit.
    idx: Vec<u32>,
    /// Per output unit: (first, count) into `idx`.
    spans: Vec<(u32, u32)>,
}

impl MaskedDense {
    /// Connect input `j` to output `r` iff `out_deg[r] > in_deg[j]` (strict)
    /// or `out_deg[r] >= in_deg[j]` (non-strict).
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_deg: &[usize],
        out_deg: &[usize],
        strict: bool,
        rng: &mut Rng,
    ) -> MaskedDense {
        let in_dim = in_deg.len();
        let out_dim = out_deg.len();
        let mut idx: Vec<u32> = Vec::new();
        let mut spans: Vec<(u32, u32)> = Vec::with_capacity(out_dim);
        for r in 0..out_dim {
            let first = idx.len() as u32;
            for j in 0..in_dim {
                let ok = if strict {
                    out_deg[r] > in_deg[j]
                } else {
                    out_deg[r] >= in_deg[j]
                };
                if ok {
                    idx.push(j as u32);
                }
            }
            spans.push((first, idx.len() as u32 - first));
        }
        // Per-unit fan-in scaling; weights drawn unit-by-unit in fixed order.
        let mut unit = 0usize;
        let mut within = 0usize;
        let total = idx.len();
        let spans_ref = spans.clone();
        let w = store.alloc(&format!("{name}.w"), total, 1, || {
            while within >= spans_ref[unit].1 as usize {
                unit += 1;
                within = 0;
            }
            within += 1;
            rng.normal() / math::sqrt((spans_ref[unit].1 as f64).max(1.0))
        });
        let b = store.alloc(&format!("{name}.b"), out_dim, 1, || 0.0);
        MaskedDense {
            w,
            b,
            in_dim,
            out_dim,
            idx,
            spans,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Number of real (unmasked) weights plus biases.
    pub fn param_count(&self) -> usize {
        self.idx.len() + self.out_dim
    }

    pub fn eval<V: Value>(&self, pv: &impl ParamView<V>, x: &[V], out: &mut Vec<V>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        let mut wrow: Vec<V> = Vec::new();
        let mut xrow: Vec<V> = Vec::new();
        for r in 0..self.out_dim {
            let (first, count) = self.spans[r];
            wrow.clear();
            xrow.clear();
            for e in first..first + count {
                wrow.push(pv.p(self.w.at(e as usize, 0)));
                xrow.push(x[self.idx[e as usize] as usize]);
            }
            out.push(V::affine(pv.p(self.b.at(r, 0)), &wrow, &xrow));
        }
    }
}

// ── plain MLP ────────────────────────────────────────────────────────────

/// Dense layers with the smooth gated activation between them and a linear
/// output.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        rng: &mut Rng,
    ) -> Mlp {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = in_dim;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(Dense::new(store, &format!("{name}.l{i}"), prev, h, rng));
            prev = h;
        }
        layers.push(Dense::new(store, &format!("{name}.out"), prev, out_dim, rng));
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }
    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn eval<V: Value>(&self, pv: &impl ParamView<V>, x: &[V], out: &mut Vec<V>) {
        let mut cur: Vec<V> = x.to_vec();
        let mut next: Vec<V> = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.eval(pv, &cur, &mut next);
            if i < last {
                for v in next.iter_mut() {
                    *v = v.silu();
                }
            }
            core::mem::swap(&mut cur, &mut next);
        }
        out.clear();
        out.extend_from_slice(&cur);
    }

    /// Convenience for scalar-output heads.
    pub fn eval_scalar<V: Value>(&self, pv: &impl ParamView<V>, x: &[V]) -> V {
        debug_assert_eq!(self.out_dim(), 1);
        let mut out = Vec::with_capacity(1);
        self.eval(pv, x, &mut out);
        out[0]
    }
}

// ── masked context network ───────────────────────────────────────────────

/// MADE-style context network: inputs `[x_1..x_D, cond...]`, outputs `D`
/// blocks of `ctx_dim` units where block `d` is a function of `x_{<d}` and
/// the conditioning inputs only.
#[derive(Debug, Clone)]
pub struct MadeNet {
    dim: usize,
    cond_dim: usize,
    ctx_dim: usize,
    layers: Vec<MaskedDense>,
}

impl MadeNet {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        cond_dim: usize,
        hidden: &[usize],
        ctx_dim: usize,
        rng: &mut Rng,
    ) -> MadeNet {
        assert!(dim >= 1 && ctx_dim >= 1 && !hidden.is_empty());
        // Identity ordering: x_j carries degree j+1, conditioning carries 0.
        let mut in_deg: Vec<usize> = (1..=dim).collect();
        in_deg.extend(core::iter::repeat_n(0, cond_dim));
        // Hidden degrees cycle over the useful range. Without conditioning
        // the minimum useful degree is 1; with it, 0 (units that read only
        // the conditioning inputs).
        let lo = if cond_dim > 0 { 0 } else { 1 };
        let hi = dim - 1;
        let span = if hi >= lo { hi - lo + 1 } else { 1 };
        let hidden_deg = |k: usize| -> usize {
            if hi < lo {
                0
            } else {
                lo + (k % span)
            }
        };

        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev_deg = in_deg;
        for (i, &h) in hidden.iter().enumerate() {
            let deg: Vec<usize> = (0..h).map(hidden_deg).collect();
            layers.push(MaskedDense::new(
                store,
                &format!("{name}.h{i}"),
                &prev_deg,
                &deg,
                false,
                rng,
            ));
            prev_deg = deg;
        }
        // Output block d has degree d+1 under a strict mask: it sees hidden
        // units of degree <= d, hence inputs x_{<=d-1} only.
        let mut out_deg = Vec::with_capacity(dim * ctx_dim);
        for d in 0..dim {
            out_deg.extend(core::iter::repeat_n(d + 1, ctx_dim));
        }
        layers.push(MaskedDense::new(
            store,
            &format!("{name}.ctx"),
            &prev_deg,
            &out_deg,
            true,
            rng,
        ));
        MadeNet {
            dim,
            cond_dim,
            ctx_dim,
            layers,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }
    pub fn ctx_dim(&self) -> usize {
        self.ctx_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// All context blocks in one pass; `out[d*ctx_dim..][..ctx_dim]` is the
    /// context for dimension `d`.
    pub fn context<V: Value>(&self, pv: &impl ParamView<V>, x: &[V], cond: &[V], out: &mut Vec<V>) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(cond.len(), self.cond_dim);
        let mut cur: Vec<V> = Vec::with_capacity(x.len() + cond.len());
        cur.extend_from_slice(x);
        cur.extend_from_slice(cond);
        let mut next: Vec<V> = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.eval(pv, &cur, &mut next);
            if i < last {
                for v in next.iter_mut() {
                    *v = v.silu();
                }
            }
            core::mem::swap(&mut cur, &mut next);
        }
        out.clear();
        out.extend_from_slice(&cur);
    }
}
