//! File formats, chain-parallel fitting, the HTTP session service and the
//! `adaptest` command line, on top of [`adaptest_core`].

pub mod cli;
pub mod error;
pub mod formats;
pub mod parallel;
pub mod service;

pub use error::{Error, Result};
