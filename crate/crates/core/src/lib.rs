//! Calibrated regression through uncertainty matching.
//!
//! Two networks are trained in alternation: a mean estimator that also
//! reports its own uncertainty (a Gaussian scale or a pair of conditional
//! quantiles) and an auxiliary interval estimator that outputs asymmetric
//! widths around the mean. The interval estimator is fitted for a single
//! target coverage level; the mean estimator's uncertainty head is pulled
//! toward those widths, which regularizes the mean fit.
//!
//! Module map:
//!
//! - [`autodiff`]: define-by-run reverse-mode differentiation over dense matrices.
//! - [`networks`]: fully connected estimators and checkpoints.
//! - [`losses`]: every training objective, plus the normal quantile helper.
//! - [`training`]: the alternating schedule, Adam, and stopping rule.
//! - [`metrics`]: RMSE, calibration error, average width, calibration curves.
//! - [`data`]: CSV ingestion, splits, and synthetic heteroscedastic data.
//! - [`baselines`]: HNN, quantile regression, and MC dropout comparators.
//! - [`cli`]: the `umatch` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN.

pub mod autodiff;
pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod data;
mod error;
pub mod interval;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod plot;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use interval::IntervalBatch;

/// Dense row-major matrix used everywhere (rows = samples).
pub type Matrix = ndarray::Array2<f64>;
