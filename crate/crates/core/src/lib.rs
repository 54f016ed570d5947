//! Relevant-hypothesis and change-point tests for functional time series,
//! calibrated by self-normalization.

pub mod changepoint;
pub mod cov_tests;
pub mod dgp;
pub mod error;
pub mod func_core;
pub mod harness;
pub mod longrun;
pub mod pivotal;

pub use error::{Error, Result};
