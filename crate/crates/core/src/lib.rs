//! Numerical laboratory for the cubic nonlinear Schrödinger equation on the
//! waveguide R x T^d with a generic convolution potential.
//!
//! The crate is organised around the objects of the problem:
//!
//! - [`lattice`]: exact integer arithmetic on torus frequencies, sampled
//!   convolution potentials and the eigenvalues `lambda_p = -|p|^2 + v_p`.
//! - [`resonance`]: enumeration of the zero-momentum set and of the resonant
//!   set restricted to a lattice ball, with the rectangle geometry check.
//! - [`smalldiv`]: small-divisor audits of the non-resonance condition and
//!   Monte-Carlo genericity estimates.
//! - [`resonant_flow`]: the resonant trilinear operator and conservative
//!   integration of the limit system, with first-integral monitoring.
//! - [`waveguide`]: pseudospectral simulation of the full PDE on a
//!   periodised waveguide, discrete norms and the time-dependent trilinear
//!   form.
//! - [`scattering`]: orchestrated experiments probing decay, norm
//!   constancy, profile matching and the effective-nonlinearity residual.

pub mod error;
pub mod lattice;
pub mod resonance;
pub mod resonant_flow;
pub mod scattering;
pub mod smalldiv;
pub mod waveguide;

pub use error::{Error, Result};
