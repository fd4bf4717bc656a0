//! Time-difference-of-arrival localization with first-order optimizers.
//!
//! The crate covers the whole pipeline: signal synthesis and correlation
//! based delay estimation ([`signal`]), the range-difference model and its
//! maximum-likelihood cost ([`measurement`]), five update rules including
//! RMSProp with an adaptive decaying factor ([`optim`]), seeded experiment
//! runs and summaries ([`harness`]), and the file formats used by the `tdoa`
//! command-line tool ([`config`], [`csv`], [`svg`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::result_large_err)]

pub mod config;
pub mod csv;
pub mod error;
pub mod harness;
pub mod measurement;
pub mod optim;
pub mod signal;
pub mod svg;

pub use error::{Error, Result};
pub use harness::{run, run_suite, ConvergenceTrace, Scenario, SuiteSummary};
pub use measurement::{CostModel, MeasurementSet, Point, ReceiverSet};
pub use optim::{Algorithm, OptimizerConfig, OptimizerState};
