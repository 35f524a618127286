//! Stochastic gradient descent with non-increasing step sizes and its
//! continuous-time counterpart.
//!
//! The discrete process is
//! `X_{n+1} = X_n - gamma (n+1)^{-alpha} H(X_n, Z_{n+1})` and the continuous one is the
//! time-inhomogeneous diffusion
//! `dX_t = -(gamma_alpha + t)^{-alpha} { grad f(X_t) dt + gamma_alpha^{1/2} Sigma(X_t)^{1/2} dB_t }`
//! with `gamma_alpha = gamma^{1/(1-alpha)}`. The crate provides both simulators, explicit
//! couplings between them, the usual stochastic-gradient oracles and the estimators
//! (rate fits, strong/weak errors, Wasserstein gaps) used to check convergence
//! exponents empirically.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod coupling;
mod error;
pub mod linalg;
pub mod noise;
pub mod objectives;
pub mod parallel;
pub mod rng;
pub mod schedule;
pub mod sde;
pub mod sgd;

pub use error::{Error, Result};
pub use noise::{GradientOracle, NoiseLaw, NoiseSetting};
pub use objectives::{ClassTag, Objective};
pub use rng::{derive_stream, RngStream, StreamRole};
pub use schedule::StepSchedule;
pub use sgd::{SamplingPlan, Trajectory};
