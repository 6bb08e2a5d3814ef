//! Byzantine-resilient stochastic gradient descent, simulated end to end.
//!
//! The crate runs the synchronous parameter-server loop
//! `w_{k+1} = w_k - alpha_k * Agg(g~_1, ..., g~_m)` over `m` logical nodes, `q` of
//! which may be Byzantine, and checks the run against the non-asymptotic theory for
//! this method: weighting sequences, random iterate selection, the finite-`K`
//! gradient-norm bound and its `K^{-(1-p)/2}` rate.
//!
//! Module map:
//!
//! - [`problems`]: synthetic objectives, stochastic gradient oracles, smoothness constants.
//! - [`aggregators`]: mean, Krum, marginal / geometric median, mean-around-median, Bulyan,
//!   the `eta(m, q)` constant and Monte-Carlo resilience certification.
//! - [`adversaries`]: Byzantine attack catalogue.
//! - [`schedules`]: learning rates, schedule validation, weighting sequence, `R_K` sampler.
//! - [`simulator`]: replicated runs and their CSV traces.
//! - [`analysis`]: bound evaluation, rate fitting and numeric lemma checks.
//! - [`experiment`]: declarative TOML experiments behind the `brsgd` binary.
//!
//! See `examples/` for one runnable program per capability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversaries;
pub mod aggregators;
pub mod analysis;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod problems;
pub mod rng;
pub mod schedules;
pub mod simulator;

pub use error::{Error, Result};
