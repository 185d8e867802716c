//! Jost and Evans functions computed as (modified) Fredholm determinants.
//!
//! The crate is organised around a handful of numerical engines:
//!
//! * [`matdet`]: dense complex determinants, Riesz projections and the
//!   perturbation expansions of `det(I - A(z))` near a singular point.
//! * [`volterra`]: Jost solutions of `-y'' + V y = z y` by Volterra marching.
//! * [`fredholm1d`]: Birman–Schwinger kernels, Nyström determinants, the
//!   zero-mode factorisation of `F'(0)` and half-line determinants.
//! * [`semisep`]: determinants of semi-separable kernels through a linear ODE.
//! * [`cylinder`]: Galerkin truncations on `R x T^{d-1}`, Evans functions and
//!   2-modified determinants.
//! * [`stabindex`]: standing waves of reaction–diffusion equations and their
//!   stability index.
//! * [`cli`]: the `fredjost` command line front end.

pub mod cli;
pub mod cylinder;
pub mod error;
pub mod fredholm1d;
pub mod kink;
pub mod matdet;
pub mod policy;
pub mod quad;
pub mod semisep;
pub mod stabindex;
pub mod volterra;

pub use error::{Error, Result};
pub use policy::NumericPolicy;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;

/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;

pub(crate) const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}
