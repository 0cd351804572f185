//! Continuous-time reservoir computing laboratory.
//!
//! Trains a leaky-tanh reservoir (random Erdős–Rényi or connectome-derived
//! coupling) to reconstruct two counter-rotating overlapping circles from one
//! fixed readout, and provides the experiment harnesses used to measure how
//! often and over which spectral radii that multifunctionality appears.
//!
//! Module map:
//! - [`topology`]: coupling matrix and input matrix construction, spectral radius.
//! - [`dynamics`]: RK4 integration of the listening and predicting reservoirs.
//! - [`training`]: feature harvesting, blending and ridge regression.
//! - [`tasks`]: the seeing-double drive signals.
//! - [`evaluation`]: roundness, rotation direction, verdicts, attractor labels.
//! - [`experiments`]: trials, sweeps, activation maps, continuation, rank-sum test.

pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod seeding;
pub mod tasks;
pub mod topology;
pub mod training;

pub use error::{Error, Result};

/// Nominal orbit period of the seeing-double signals (unit angular frequency).
pub const PERIOD: f64 = 2.0 * std::f64::consts::PI;
