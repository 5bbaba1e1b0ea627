//! Evolutionary dynamics of heterogeneous populations.
//!
//! Agents carry persistent types drawn from a type distribution, which is
//! discretized into a quadrature [`typegrid::TypeGrid`]. The state is the
//! strategy mixture of each type node; games map states to per-type payoffs,
//! revision protocols turn payoffs into switching rates, and the resulting
//! mean dynamic is integrated with fixed-step Runge–Kutta.

pub mod commands;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod games;
pub mod potential;
pub mod protocols;
pub mod scenario;
pub mod typegrid;

pub use error::{Error, Result};
