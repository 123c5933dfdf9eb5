//! Maximum likelihood estimation for continuous-time hidden Markov chains
//! observed in additive white noise.
//!
//! The library covers the full pipeline:
//!
//! - [`model`]: rate-matrix families, validation, contraction rate, the
//!   canonical two-state switching model;
//! - [`simulate`]: exact trajectory sampling for the hidden chain, discretized
//!   noisy observations, and coupled chain pairs;
//! - [`filter`]: Euler discretization of the conditional-law SDE with
//!   log-likelihood accumulation and parameter-sensitivity propagation;
//! - [`estimate`]: grid + golden-section MLE, Fisher information, local
//!   likelihood profiles;
//! - [`asymptotics`]: Monte Carlo studies of consistency, asymptotic
//!   normality, moment convergence, LLN scaling and identifiability;
//! - [`stability`]: empirical checks of filter contraction, tangent decay,
//!   robustness in the parameter and boundary moments;
//! - [`config`] / [`report`]: experiment configuration and report output used
//!   by the `hmmle` binary.
//!
//! All randomness flows through [`rng::RngStream`], a counter-derived ChaCha8
//! stream, so every result is reproducible from a master seed.

pub mod asymptotics;
pub mod config;
pub mod error;
pub mod estimate;
pub mod filter;
pub mod model;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod stability;
pub mod stats;

mod linalg;

pub use error::{Error, Result};
