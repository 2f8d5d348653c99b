//! Scalar-tape reverse-mode autodiff with forward-mode nesting.

mod api;
mod params;
mod scalar;
mod tape;

pub use api::{directional_deriv, grad, grad_of_directional, TapeFn};
pub use params::{Binder, NumericParams, ParamBlock, ParamEntry, ParamStore, ParamView};
pub use scalar::{Dual, Jet2, Scalar, Value};
pub use tape::{Adjoints, Tape, Var};
