//! Gaussian Volterra processes observed through a noisy Brownian motion.
//!
//! The crate computes exact conditional laws of such processes given finitely
//! many linear functionals of the noisy path, or the whole noisy path up to a
//! horizon `T`; small-time limit covariances of the increments after `T`; and
//! the associated large-deviation rate functionals, together with Monte Carlo
//! probes and an exact finite-dimensional sampler used as an oracle.

pub mod asymptotics;
pub mod conditioning;
pub mod error;
pub mod ldp;
pub mod models;
pub mod numerics;
pub mod par;
pub mod sim;

pub use error::{Error, Result};
