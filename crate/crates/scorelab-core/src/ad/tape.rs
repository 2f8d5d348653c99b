//! Append-only scalar tape with reverse-mode sweeps.
//!
//! Every node is a scalar of type `S`; edges store the local partial toward
//! each parent. Because `S` may itself carry forward-mode tangents ([`Dual`],
//! [`Jet2`]), one reverse sweep simultaneously produces the gradient of the
//! recorded value and the gradient of its forward-mode derivative slots:
//! seeding an output with adjoint `(1, 0)` leaves `d(value)/d(leaf)` in the
//! adjoint value slot and `d(tangent)/d(leaf)` in the adjoint tangent slot.
//!
//! Replay is deterministic: nodes are visited in reverse creation order and
//! edge contributions accumulate in a fixed order, so identical programs
//! produce bit-identical gradients.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use super::scalar::{Scalar, Value};

#[allow(unused_imports)]
use super::scalar::{Dual, Jet2}; // referenced by the module docs

pub struct Tape<S: Scalar> {
    inner: RefCell<TapeInner<S>>,
}

struct TapeInner<S> {
    vals: Vec<S>,
    /// Per node: (first edge, edge count) into the flat edge arrays.
    spans: Vec<(u32, u32)>,
    parents: Vec<u32>,
    partials: Vec<S>,
}

/// Handle to one tape node. Carries its value so arithmetic reads no
/// tape state.
pub struct Var<'t, S: Scalar> {
    tape: &'t Tape<S>,
    id: u32,
    val: S,
}

impl<'t, S: Scalar> Clone for Var<'t, S> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<'t, S: Scalar> Copy for Var<'t, S> {}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            inner: RefCell::new(TapeInner {
                vals: Vec::new(),
                spans: Vec::new(),
                parents: Vec::new(),
                partials: Vec::new(),
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Input node: no parents.
    pub fn leaf(&self, val: S) -> Var<'_, S> {
        let mut t = self.inner.borrow_mut();
        let id = t.vals.len() as u32;
        let first = t.parents.len() as u32;
        t.vals.push(val);
        t.spans.push((first, 0));
        Var { tape: self, id, val }
    }

    fn unary(&self, val: S, p: u32, dp: S) -> Var<'_, S> {
        let mut t = self.inner.borrow_mut();
        let id = t.vals.len() as u32;
        let first = t.parents.len() as u32;
        t.vals.push(val);
        t.spans.push((first, 1));
        t.parents.push(p);
        t.partials.push(dp);
        Var { tape: self, id, val }
    }

    fn binary(&self, val: S, p0: u32, dp0: S, p1: u32, dp1: S) -> Var<'_, S> {
        let mut t = self.inner.borrow_mut();
        let id = t.vals.len() as u32;
        let first = t.parents.len() as u32;
        t.vals.push(val);
        t.spans.push((first, 2));
        t.parents.push(p0);
        t.partials.push(dp0);
        t.parents.push(p1);
        t.partials.push(dp1);
        Var { tape: self, id, val }
    }

    /// Fused `bias + sum_i w[i]*x[i]` node; partials are `x[i]` toward
    /// `w[i]`, `w[i]` toward `x[i]`, and 1 toward the bias.
    fn affine_node(&self, bias: Var<'_, S>, w: &[Var<'_, S>], x: &[Var<'_, S>]) -> Var<'_, S> {
        debug_assert_eq!(w.len(), x.len());
        let mut val = bias.val;
        for (wi, xi) in w.iter().zip(x.iter()) {
            val = val + wi.val * xi.val;
        }
        let mut t = self.inner.borrow_mut();
        let id = t.vals.len() as u32;
        let first = t.parents.len() as u32;
        t.vals.push(val);
        t.spans.push((first, (2 * w.len() + 1) as u32));
        t.parents.push(bias.id);
        t.partials.push(S::one());
        for (wi, xi) in w.iter().zip(x.iter()) {
            t.parents.push(wi.id);
            t.partials.push(xi.val);
            t.parents.push(xi.id);
            t.partials.push(wi.val);
        }
        Var { tape: self, id, val }
    }

    fn sum_node(&self, terms: &[Var<'_, S>]) -> Var<'_, S> {
        let mut val = terms[0].val;
        for t in &terms[1..] {
            val = val + t.val;
        }
        let mut t = self.inner.borrow_mut();
        let id = t.vals.len() as u32;
        let first = t.parents.len() as u32;
        t.vals.push(val);
        t.spans.push((first, terms.len() as u32));
        for term in terms {
            t.parents.push(term.id);
            t.partials.push(S::one());
        }
        Var { tape: self, id, val }
    }

    /// Handle for an already-recorded node.
    pub(crate) fn var_for(&self, id: u32) -> Var<'_, S> {
        let val = self.inner.borrow().vals[id as usize];
        Var { tape: self, id, val }
    }

    /// Reverse sweep from arbitrary seeded outputs. Adjoints are `S`-valued,
    /// so forward-mode slots ride along through the sweep.
    pub fn backward_seeded(&self, seeds: &[(Var<'_, S>, S)]) -> Adjoints<S> {
        let t = self.inner.borrow();
        let n = t.vals.len();
        let mut adj = vec![S::zero(); n];
        let mut hi = 0usize;
        for (v, s) in seeds {
            debug_assert!(core::ptr::eq(v.tape, self));
            adj[v.id as usize] = adj[v.id as usize] + *s;
            hi = hi.max(v.id as usize);
        }
        let zero = S::zero();
        for id in (0..=hi).rev() {
            let a = adj[id];
            if a == zero {
                continue;
            }
            let (first, count) = t.spans[id];
            let (first, count) = (first as usize, count as usize);
            for e in first..first + count {
                let p = t.parents[e] as usize;
                adj[p] = adj[p] + a * t.partials[e];
            }
        }
        Adjoints { adj }
    }

    /// Reverse sweep from one output with unit adjoint.
    pub fn backward(&self, out: Var<'_, S>) -> Adjoints<S> {
        self.backward_seeded(&[(out, S::one())])
    }
}

/// Result of a reverse sweep: one adjoint per node.
pub struct Adjoints<S> {
    adj: Vec<S>,
}

impl<S: Scalar> Adjoints<S> {
    pub fn of(&self, v: Var<'_, S>) -> S {
        self.adj[v.id as usize]
    }

    pub(crate) fn of_id(&self, id: u32) -> S {
        self.adj[id as usize]
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    pub fn value(self) -> S {
        self.val
    }

    pub fn primal(self) -> f64 {
        self.val.primal()
    }

    pub(crate) fn id(self) -> u32 {
        self.id
    }

    pub fn tape(self) -> &'t Tape<S> {
        self.tape
    }
}

// ── arithmetic: Var ∘ Var ────────────────────────────────────────────────

impl<'t, S: Scalar> core::ops::Add for Var<'t, S> {
    type Output = Var<'t, S>;
    fn add(self, o: Var<'t, S>) -> Var<'t, S> {
        debug_assert!(core::ptr::eq(self.tape, o.tape));
        self.tape
            .binary(self.val + o.val, self.id, S::one(), o.id, S::one())
    }
}

impl<'t, S: Scalar> core::ops::Sub for Var<'t, S> {
    type Output = Var<'t, S>;
    fn sub(self, o: Var<'t, S>) -> Var<'t, S> {
        debug_assert!(core::ptr::eq(self.tape, o.tape));
        self.tape
            .binary(self.val - o.val, self.id, S::one(), o.id, -S::one())
    }
}

impl<'t, S: Scalar> core::ops::Mul for Var<'t, S> {
    type Output = Var<'t, S>;
    fn mul(self, o: Var<'t, S>) -> Var<'t, S> {
        debug_assert!(core::ptr::eq(self.tape, o.tape));
        self.tape
            .binary(self.val * o.val, self.id, o.val, o.id, self.val)
    }
}

impl<'t, S: Scalar> core::ops::Div for Var<'t, S> {
    type Output = Var<'t, S>;
    fn div(self, o: Var<'t, S>) -> Var<'t, S> {
        debug_assert!(core::ptr::eq(self.tape, o.tape));
        let q = self.val / o.val;
        self.tape
            .binary(q, self.id, S::one() / o.val, o.id, -q / o.val)
    }
}

impl<'t, S: Scalar> core::ops::Neg for Var<'t, S> {
    type Output = Var<'t, S>;
    fn neg(self) -> Var<'t, S> {
        self.tape.unary(-self.val, self.id, -S::one())
    }
}

// ── arithmetic: Var ∘ f64 constant (constants never become nodes) ───────

impl<'t, S: Scalar> core::ops::Add<f64> for Var<'t, S> {
    type Output = Var<'t, S>;
    fn add(self, c: f64) -> Var<'t, S> {
        self.tape.unary(self.val + c, self.id, S::one())
    }
}

impl<'t, S: Scalar> core::ops::Sub<f64> for Var<'t, S> {
    type Output = Var<'t, S>;
    fn sub(self, c: f64) -> Var<'t, S> {
        self.tape.unary(self.val - c, self.id, S::one())
    }
}

impl<'t, S: Scalar> core::ops::Mul<f64> for Var<'t, S> {
    type Output = Var<'t, S>;
    fn mul(self, c: f64) -> Var<'t, S> {
        self.tape
            .unary(self.val * c, self.id, S::from_f64(c))
    }
}

impl<'t, S: Scalar> core::ops::Div<f64> for Var<'t, S> {
    type Output = Var<'t, S>;
    fn div(self, c: f64) -> Var<'t, S> {
        self.tape
            .unary(self.val / c, self.id, S::from_f64(1.0 / c))
    }
}

impl<'t, S: Scalar> Value for Var<'t, S> {
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.tape.unary(e, self.id, e)
    }

    fn ln(self) -> Self {
        self.tape
            .unary(self.val.ln(), self.id, S::one() / self.val)
    }

    fn tanh(self) -> Self {
        let u = self.val.tanh();
        self.tape.unary(u, self.id, S::one() - u * u)
    }

    fn silu(self) -> Self {
        // d/dx [x σ(x)] = σ(x) (1 + x (1 - σ(x))), computed in S so dual and
        // jet slots propagate through the local partial.
        let x = self.val;
        let sig = sigmoid_s(x);
        let dp = sig * (S::one() + x * (S::one() - sig));
        self.tape.unary(x * sig, self.id, dp)
    }

    fn square(self) -> Self {
        let dp = self.val + self.val;
        self.tape.unary(self.val * self.val, self.id, dp)
    }

    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        self.tape
            .unary(r, self.id, S::one() / (r + r))
    }

    fn affine(bias: Self, w: &[Self], x: &[Self]) -> Self {
        bias.tape.affine_node(bias, w, x)
    }

    fn sum(terms: &[Self]) -> Self {
        terms[0].tape.sum_node(terms)
    }
}

/// Sigmoid over the scalar algebra, on the branch that keeps `exp` bounded.
fn sigmoid_s<S: Scalar>(x: S) -> S {
    if x.primal() >= 0.0 {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (e + 1.0)
    }
}
