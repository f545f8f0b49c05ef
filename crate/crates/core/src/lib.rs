//! Short-time parametrix construction for one-dimensional Schrödinger
//! propagators `i∂ₜu = −½∂ₓ²u + V(t,x)u` with potentials whose second
//! derivative is continuous and bounded.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerics:
//!
//! * [`potentials`]: the potential interface, the built-in family, and the
//!   regularity / growth validation.
//! * [`classical`]: Hamiltonian flow, shooting for the two-point problem,
//!   action integrals and variational Jacobians.
//! * [`wavepacket`]: Gaussian windows in closed form, the wave packet
//!   transform and its adjoint, and the moment estimates for evolved windows.
//! * [`kernels`]: closed-form propagator kernels, the spatial grid, dense
//!   kernel blocks and operator-norm estimation.
//! * [`parametrix`]: the phase-space integral `E₀`, its amplitude, the
//!   phase decomposition residual, and the filtered block used to measure the
//!   remainder operator.
//! * [`rates`]: log-log rate fitting.
//!
//! IO, the split-step reference propagator, parallel drivers and the CLI live
//! in the `semikernel` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod classical;
pub mod error;
pub mod kernels;
pub mod parametrix;
pub mod potentials;
pub mod quad;
pub mod rates;
pub mod wavepacket;

pub use error::{Error, Result};
pub use num_complex::Complex64;
