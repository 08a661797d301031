//! Split-step spectral simulation of scattering-critical Schrödinger equations
//! (Hartree, Schrödinger–Bopp–Podolsky, power type) together with the
//! wavepacket analysis used to measure their modified-scattering asymptotics.

// `!(x > 0.0)` guards reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod fft;
pub mod galilean;
pub mod grid;
pub mod harness;
pub mod kernels;
pub mod lens;
pub mod propagator;
pub mod quad;
pub mod wavepacket;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
