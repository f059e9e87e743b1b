//! Cloud-assisted asynchronous primal-dual optimization.
//!
//! Agents own blocks of a decision vector and update them asynchronously on
//! local copies; a cloud aggregates their states and performs synchronized
//! updates of the dual variable of a regularized Lagrangian.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod problem;
pub mod reg;
pub mod sim;
pub mod sync;

pub use error::{Error, Result};
