//! Finite-difference toolkit for the 2D weakly-compressible Navier–Stokes
//! equations in a periodic channel, built around a time-reversal view of
//! initial-value well-posedness.
//!
//! * [`fields`]: grid, fields, stencil operators.
//! * [`solver`]: RK4 integration, stability limits, blow-up detection.
//! * [`bench`]: analytic steady benchmarks and the steady residual.
//! * [`reversal`]: time maps, the reversed Poiseuille decomposition, asymptotic checks.
//! * [`admissibility`]: parameterised initial data and classification sweeps.
//! * [`config`], [`output`], [`check`]: configuration, file emission and the self-check suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fields;
pub mod solver;
pub mod bench;
pub mod reversal;
pub mod admissibility;
pub mod config;
pub mod output;
pub mod check;

pub use error::{Error, Result};
