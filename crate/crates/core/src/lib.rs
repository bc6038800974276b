//! Numerical core of a content-balanced computerized adaptive testing engine.
//!
//! The crate is `no_std` and only needs an allocator. It covers
//!
//! - the two-parameter logistic model with item and test information and a
//!   grid posterior over ability ([`irt`]),
//! - item banks, their invariants, canonical vocabularies and a synthetic
//!   generator ([`bank`]),
//! - the adaptive session state machine with content balancing, unscored
//!   item interleaving and replayable transcripts ([`engine`]),
//! - a random-walk Metropolis sampler with split-R̂ and bulk/tail ESS
//!   ([`mcmc`]),
//! - Bayesian 2PL calibration from response matrices ([`calibration`]),
//! - simulation studies for test length and recovery after mistakes ([`sim`]),
//! - measurement-error models for test-retest ICC and convergent validity
//!   ([`eval`]).
//!
//! File formats, the HTTP service and the command-line tool live in the
//! `adaptest` crate.
#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;

pub mod bank;
pub mod calibration;
pub mod engine;
mod error;
pub mod eval;
pub mod irt;
pub mod math;
pub mod mcmc;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
