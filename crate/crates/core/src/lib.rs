//! Simulation and verification toolkit for the Robbins-Monro recursion
//!
//! ```text
//! X_{n+1} = X_n + b/(n+1) · (g(X_n) + U_{n+1})
//! ```
//!
//! driven by bounded martingale-difference noise. The crate computes the
//! weight products `β_k^n(c) = ∏_{j=k}^n (1 + c/(j+1))` and the normalizer
//! `h_n` exactly, assembles explicit exponential tail bounds from the
//! Azuma-Hoeffding inequality, and measures moderate-deviation rates
//! `b_n^{-2} log P(h_n |X_{n+1} - x*| > r b_n)` by Monte Carlo against exact
//! enumeration and Gaussian references.
//!
//! Module map:
//!
//! - [`weights`]: `β_k^n(c)`, the sandwich bounds, `h_n` and its asymptote.
//! - [`model`]: drift functions and noise models.
//! - [`engine`]: path simulation, weighted martingale sums, the Taylor
//!   decomposition and the deterministic envelope.
//! - [`bounds`]: Azuma-Hoeffding tails and the explicit exponential inequality.
//! - [`mdp`]: tail estimation, enumeration oracles and rate curves.
//! - [`config`] / [`selftest`]: plumbing behind the `samdp` binary.

pub mod bounds;
pub mod config;
pub mod engine;
mod error;
pub mod mdp;
pub mod model;
pub mod output;
pub mod rng;
pub mod selftest;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
pub use model::{DriftFunction, NoiseModel, ProblemSpec};
pub use weights::SignedLogValue;
