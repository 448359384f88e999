//! Estimation toolkit for in-play football betting markets.
//!
//! The pipeline turns 1 Hz odds/stake ticks into a per-minute panel oriented
//! to the team that scores first, fits bookmaker regressions with
//! match-clustered standard errors, and fits a latent AR(1) state-space model
//! with zero-one-inflated beta observations for the relative stakes placed by
//! bettors. A synthetic season simulator produces data in the same file
//! formats and doubles as ground truth for recovery studies.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beinf;
pub mod cli;
pub mod error;
pub mod estimate;
pub mod linreg;
pub mod odds;
pub mod panel;
pub mod recovery;
pub mod report;
pub mod simulate;
pub mod ssm;

pub use error::{Error, Result};
