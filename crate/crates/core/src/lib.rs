//! Multivariate Hawkes processes for limit order book event streams.
//!
//! The crate covers the whole pipeline: classifying level-1 tick data into
//! liquidity demand and replenishment events, simulating and calibrating
//! Hawkes processes with sum-of-exponentials kernels and piecewise-linear
//! baselines, and checking fits with random-time-change residual tests.

pub mod calibrator;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod likelihood;
pub mod lob;
pub mod model;
pub mod report;
pub mod simulator;

pub use error::{HawkesError, Result};
pub use model::{EventLog, HawkesModel, KernelParams, PiecewiseLinearBaseline, Stability};
