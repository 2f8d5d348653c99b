//! Flat parameter storage with a named shape manifest, and views that hand
//! parameters to generic model code either as tape leaves (training) or as
//! plain scalars (inference).

use alloc::string::String;
use alloc::vec::Vec;
use core::marker::PhantomData;

use super::scalar::Scalar;
use super::tape::{Tape, Var};

/// One named tensor inside the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Offset handle returned at allocation time; layers keep these instead of
/// raw indices.
#[derive(Debug, Copy, Clone)]
pub struct ParamBlock {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Flat index of element (r, c), row-major.
    pub fn at(&self, r: usize, c: usize) -> usize {
        debug_assert!(r < self.rows && c < self.cols);
        self.offset + r * self.cols + c
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    data: Vec<f64>,
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a named `rows x cols` tensor initialized by `init`, called in
    /// row-major order (deterministic RNG consumption).
    pub fn alloc(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        mut init: impl FnMut() -> f64,
    ) -> ParamBlock {
        let offset = self.data.len();
        for _ in 0..rows * cols {
            self.data.push(init());
        }
        self.entries.push(ParamEntry {
            name: String::from(name),
            offset,
            rows,
            cols,
        });
        ParamBlock { offset, rows, cols }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn values(&self) -> &[f64] {
        &self.data
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    /// Replace all values; lengths must match.
    pub fn load(&mut self, values: &[f64]) -> crate::Result<()> {
        if values.len() != self.data.len() {
            return Err(crate::Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.data.len(),
                got: values.len(),
            });
        }
        self.data.copy_from_slice(values);
        Ok(())
    }
}

/// Uniform parameter access for code generic over the value type.
pub trait ParamView<V: Copy> {
    fn p(&self, index: usize) -> V;
}

/// Parameters bound onto a tape as a contiguous run of leaves.
pub struct Binder<'t, S: Scalar> {
    tape: &'t Tape<S>,
    first: u32,
    len: usize,
}

impl<'t, S: Scalar> Binder<'t, S> {
    /// Bind every parameter of `store` as a constant-tangent leaf.
    pub fn bind(tape: &'t Tape<S>, store: &ParamStore) -> Binder<'t, S> {
        let mut first = 0u32;
        for (i, &v) in store.values().iter().enumerate() {
            let var = tape.leaf(S::from_f64(v));
            if i == 0 {
                first = var.id();
            }
        }
        Binder {
            tape,
            first,
            len: store.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn var(&self, index: usize) -> Var<'t, S> {
        debug_assert!(index < self.len);
        self.tape.var_for(self.first + index as u32)
    }

    /// Copy this binder's adjoints out of a sweep result, mapping each to
    /// `f64` through `project` (value slot, tangent slot, ...).
    pub fn collect_adjoints(
        &self,
        adj: &super::tape::Adjoints<S>,
        project: impl Fn(S) -> f64,
        out: &mut [f64],
    ) {
        debug_assert_eq!(out.len(), self.len);
        for i in 0..self.len {
            out[i] = project(adj.of_id(self.first + i as u32));
        }
    }

    /// Accumulate projected adjoints: `out[i] += project(adj_i)`.
    pub fn accumulate_adjoints(
        &self,
        adj: &super::tape::Adjoints<S>,
        project: impl Fn(S) -> f64,
        out: &mut [f64],
    ) {
        debug_assert_eq!(out.len(), self.len);
        for i in 0..self.len {
            out[i] += project(adj.of_id(self.first + i as u32));
        }
    }
}

impl<'t, S: Scalar> ParamView<Var<'t, S>> for Binder<'t, S> {
    fn p(&self, index: usize) -> Var<'t, S> {
        self.var(index)
    }
}

/// Plain numeric view of a store (no recording); parameters appear as
/// constants of scalar type `S`.
pub struct NumericParams<'a, S> {
    values: &'a [f64],
    _marker: PhantomData<S>,
}

impl<'a, S: Scalar> NumericParams<'a, S> {
    pub fn new(store: &'a ParamStore) -> Self {
        NumericParams {
            values: store.values(),
            _marker: PhantomData,
        }
    }

    pub fn from_slice(values: &'a [f64]) -> Self {
        NumericParams {
            values,
            _marker: PhantomData,
        }
    }
}

impl<'a, S: Scalar> ParamView<S> for NumericParams<'a, S> {
    fn p(&self, index: usize) -> S {
        S::from_f64(self.values[index])
    }
}
