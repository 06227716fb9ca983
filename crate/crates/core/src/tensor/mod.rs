//! Dense `f64` matrices and a tape for reverse-mode differentiation.
//!
//! [`Matrix`] is the plain value type. A [`Tape`] records operations on
//! matrices and hands out [`Tensor`] handles; [`Tape::backward`] sweeps the
//! record once in reverse and accumulates gradients into leaves that were
//! created with `requires_grad`.

pub mod gradcheck;
mod matrix;
mod tape;

pub use matrix::{dot, Matrix};
pub use tape::{softmax_rows, Tape, Tensor};

pub(crate) use tape::l2_norm;

/// Floor used in every ℓ2 normalization denominator.
pub const NORM_EPS: f64 = 1e-12;
