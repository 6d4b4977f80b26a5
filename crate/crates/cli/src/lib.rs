//! Command-line front end for `cycle-funnel`: fixed points, ROA estimates,
//! transitions, and the worked examples, all written as CSV.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod format;

pub use config::RunConfig;
pub use error::CliError;
