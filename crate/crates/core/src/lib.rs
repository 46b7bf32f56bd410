//! Numerical laboratory for heavy-tailed gradient noise.
//!
//! The crate models stochastic gradient descent as a discretized SDE driven by
//! a symmetric alpha-stable Levy motion and provides the pieces needed to study
//! that model end to end:
//!
//! - [`stable`]: symmetric alpha-stable (SaS) sampling and diagnostics.
//! - [`estimate`]: the block-sum tail-index estimator, a Hill baseline and a
//!   calibration harness.
//! - [`sde`]: potentials, Levy paths and the Euler-type integrator.
//! - [`meta`]: metastability analytics (generator matrix, stationary law,
//!   exit-time and occupation experiments).
//! - [`gradnoise`]: a desk-scale gradient-noise measurement pipeline with
//!   small hand-differentiated models.
//!
//! Every random operation takes an explicit `u64` seed and draws from
//! [`rng::SeededRng`] (ChaCha8), so results are reproducible across platforms.

pub mod error;
pub mod estimate;
pub mod gradnoise;
pub mod meta;
pub mod rng;
pub mod sde;
pub mod stable;
pub mod stats;

pub use error::{Error, Result};
