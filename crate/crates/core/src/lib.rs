//! Spectral solver for damped second-order Volterra integro-differential
//! equations
//!
//! ```text
//! x''(t) + 2 gamma A^alpha x'(t) + A x(t) = ∫_0^∞ b(s) x(t - s) ds + f(t, x(t))
//! ```
//!
//! where `A` is a positive self-adjoint operator with a discrete spectrum.
//! Each eigenmode is a damped oscillator; the solver builds the exact
//! two-by-two semigroup per mode, checks the hypotheses that make the
//! mild-solution map a contraction, and computes the bounded mild solution
//! by Picard iteration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod almost_automorphy;
pub mod certificate;
pub mod cli;
pub mod error;
pub mod forcing;
pub mod memory;
pub mod mild;
pub mod modal;
pub mod plate;
pub mod semigroup;
pub mod spectral;

pub use error::{Error, Result};
pub use spectral::{ModeCoeffs, ProductState, SpectralModel, Trajectory};
