//! Simulation, parameter estimation and finite-size key rates for the
//! coherent-state continuous-variable QKD protocol with homodyne detection
//! and reverse reconciliation.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel_sim`] samples sessions from the scalar Gaussian loss channel
//!   `y = t x + z` and splits them into parameter-estimation and key subsets.
//! * [`estimators`] holds the maximum-likelihood, method-of-moments and
//!   second-modulation estimators, their closed-form variances, and a
//!   delta-method engine that re-derives those variances from the covariance
//!   of the underlying moment statistics.
//! * [`security`] turns channel parameters into two-mode covariance matrices,
//!   Holevo bounds and asymptotic or finite-size key rates.
//! * [`optimizer`] maximises the finite-size key rate over the modulation
//!   variance and the revealed fraction, and locates the maximum distance.
//! * [`experiments`] reproduces the standard-deviation, key-rate and
//!   optimal-parameter sweeps as CSV tables and runs the Monte Carlo
//!   validation harness.
//!
//! With the default `parallel` feature, Monte Carlo trials and optimizer
//! grids run on rayon; without it every loop runs sequentially and produces
//! bit-identical results.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel_sim;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod optimizer;
pub mod par;
pub mod security;
pub mod stats;

pub use error::{Error, Result};
