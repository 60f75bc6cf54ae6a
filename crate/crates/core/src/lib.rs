//! Pointing-error budgeting for flexible spacecraft.
//!
//! The pipeline follows the usual four analysis steps: characterize the error
//! sources, transfer them through an LTI model of the pointing system, apply
//! the pointing-index weighting, and combine the contributions into a budget.
//! A worst-case layer repeats the transfer step over a box of uncertain
//! model parameters.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combine;
pub mod error;
pub mod linsys;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod report;
pub mod scenario;
pub mod sources;
pub mod spacecraft;
pub mod transfer;
pub mod worstcase;

pub use error::{Error, Result};
pub use linsys::{FrequencyGrid, StateSpace};
