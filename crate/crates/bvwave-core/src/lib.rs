//! Numerical laboratory for 1D wave and Helmholtz problems with coefficients
//! of bounded variation.
//!
//! The crate is split along the objects it computes with:
//!
//! - [`bv`]: exact measure calculus for piecewise-polynomial BV functions
//!   (one-sided limits, derivative measures, product/chain rules,
//!   integration by parts).
//! - [`weight`]: construction of the exponential weight `w = e^{q1 + q2}`
//!   from a jump recursion, and verification of its defining measure
//!   inequalities.
//! - [`medium`]: positive coefficient pairs `(alpha, beta)` that are constant
//!   outside a compact interval.
//! - [`helmholtz`]: exact transfer-matrix solutions on layered media,
//!   outgoing Green's kernels, and Nystrom operator-norm estimates for
//!   cutoff and weighted resolvents.
//! - [`resonances`]: Wronskian zeros in the complex plane, certified by the
//!   argument principle, plus the residue law at the zero-frequency pole.
//! - [`wavesim`]: staggered leapfrog time stepping, local-energy decay
//!   measurement and the explicit limit constant.
//!
//! Everything here is `no_std` + `alloc`; IO, file formats and the CLI live
//! in the companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bv;
pub mod dual;
pub mod error;
pub mod helmholtz;
pub mod medium;
pub mod poly;
pub mod quad;
pub mod resonances;
pub mod wavesim;
pub mod weight;

pub use bv::{BvMeasure, Limits, PiecewiseFunction};
pub use error::Error;
pub use medium::Medium;

/// Shorthand used throughout the crate.
pub type Complex = num_complex::Complex<f64>;
