//! Market-based price moments, characteristic-function densities and
//! consumption-based pricing solvers for trade tick data.
//!
//! The crate is organized by task:
//!
//! * [`trade_series`]: tick-CSV parsing and count-based windows;
//! * [`moments`]: frequency and market price moments, VWAP, autocorrelations;
//! * [`density`]: truncated characteristic functions and density recovery;
//! * [`utility`] and [`pricing`]: utility families, mean-price solvers and
//!   holdings optimization;
//! * [`simulator`]: deterministic synthetic trades for validation;
//! * [`config`] and [`cli`]: the `mbm` command-line front end.

pub mod cli;
pub mod config;
pub mod density;
pub mod error;
pub mod moments;
pub mod pricing;
pub mod simulator;
pub mod trade_series;
pub mod utility;

pub use error::{Error, ErrorKind, Result};
