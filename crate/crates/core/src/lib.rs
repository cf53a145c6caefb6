//! Continuous-variable distributed quantum sensing with noiseless linear
//! amplifiers.
//!
//! A squeezed-vacuum source is split over `M` sensor nodes, distributed over
//! pure-loss channels, optionally amplified by heralded noiseless linear
//! amplifiers, and read out by homodyne detection. The crate provides:
//!
//! * [`fock`]: a truncated Fock-space kernel (states, channels, moments),
//! * [`gaussian`]: a covariance-matrix engine for the Gaussian scenarios,
//! * [`nla`]: ideal and quantum-scissor amplifier models,
//! * [`sensing`]: end-to-end pipelines, closed-form sensitivities and bounds,
//! * [`cli`] and [`validate`]: the sweep front-end and invariant suite.

pub mod cli;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod nla;
pub mod sensing;
pub mod validate;

pub use error::{Error, Result};
