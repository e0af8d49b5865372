//! Simulation of stochastic functional differential equations driven by
//! G-Brownian motion with infinite, fading-memory delay.
//!
//! The crate is organised bottom-up:
//!
//! * [`phase_space`]: the fading-memory phase space, initial data and
//!   history segments `y_t`.
//! * [`gbm`]: G-Brownian motion ensembles generated from a finite family of
//!   volatility scenarios, with sup-over-scenario estimators of the
//!   sublinear expectation and capacity.
//! * [`coefficients`]: the coefficient functionals `(f, g, h)`, a catalog of
//!   test problems and sampling checkers for the monotonicity conditions.
//! * [`picard`]: Picard iteration and a one-pass Euler reference scheme.
//! * [`estimates`]: the explicit constants and bounds (moment bounds, Picard
//!   error envelope, growth rates) plus Gronwall and Bihari oracles.
//! * [`cli`]: config parsing and the batch experiment runner behind the
//!   `gsfde` binary.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coefficients;
pub mod error;
pub mod estimates;
pub mod gbm;
pub mod grid;
pub mod phase_space;
pub mod picard;

pub use error::{Error, Result};
