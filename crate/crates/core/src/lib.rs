//! Feynman-Kac path integral Monte Carlo for space-time fractional
//! Schrodinger equations.
//!
//! Ground-state energies are read off the exponential decay of
//! `Z(t) = E[exp(-int_0^t V(X(s)) ds)]`, where `X` is a Brownian walk, a
//! Levy flight, or a continuous-time random walk with Pareto waiting times.

pub mod analytics;
pub mod error;
pub mod estimators;
pub mod fractal;
pub mod paths;
pub mod potentials;
pub mod sampling;

pub use error::{Error, Result};
