//! Exponential energy decay of the vectorial damped wave equation on the circle.
//!
//! For `u: R x S^1 -> C^n` solving `u_tt - u_xx + 2 a(x) u_t = 0` with a
//! Hermitian positive semi-definite damping `a`, the best decay rate of the
//! energy is `alpha = 2 min(-D0, C_inf)`. `D0` is the spectral abscissa of the
//! generator (computed in [`spectrum`] from a Fourier-Galerkin truncation) and
//! `C_inf` is the asymptotic contraction rate of the damping cocycle along
//! geodesics (computed in [`cocycle`] from the spectral radius of the period
//! map). [`wave_sim`] cross-checks both against a time-domain solver.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod asymptotics;
pub mod catalog;
pub mod cocycle;
pub mod damping;
pub mod error;
pub mod matrix;
pub mod quadrature;
pub mod search;
pub mod spectrum;
pub mod wave_sim;

pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, HermitianMatrix, C64};
