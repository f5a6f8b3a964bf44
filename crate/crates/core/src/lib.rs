//! Near-threshold fluctuation dynamics of a parametrically driven nonlinear
//! oscillator.
//!
//! The modules follow the chain of reductions used throughout:
//!
//! * [`params`] maps lab-frame parameters to the rotating-frame controls
//!   (μ_p, f_p) and the quantum noise intensity D.
//! * [`rwaflow`] is the deterministic two-variable rotating-frame flow.
//! * [`potential`] is the one-variable sextic potential obtained by
//!   eliminating the fast quadrature, with its Boltzmann density.
//! * [`rates`] evaluates Kramers-type switching rates over its barriers.
//! * [`fpe`] computes the Fokker–Planck relaxation spectrum.
//! * [`langevin`] simulates the overdamped Langevin dynamics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fpe;
pub mod langevin;
pub mod output;
pub mod params;
pub mod potential;
pub mod rates;
pub mod rwaflow;
pub mod tridiag;

pub use error::{Error, Result};
pub use params::{LabFrameParams, ScaledParams, Sign};
pub use potential::{GridSpec, PotentialModel, Regime};

/// Crate version recorded in output headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
