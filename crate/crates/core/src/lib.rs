//! Forecasting and forecast evaluation for infectious-disease surveillance
//! counts.
//!
//! - [`forecast_dist`]: predictive distributions over counts
//! - [`scores`]: point scores and proper scoring rules
//! - [`calibration`]: PIT histograms, calibration slope, score comparison tests
//! - [`ee_model`]: endemic-epidemic negative-binomial time-series model
//! - [`baselines`]: naive historical forecasters
//! - [`harness`]: data ingestion, rolling-origin experiments and reports
// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod calibration;
pub mod ee_model;
pub mod error;
pub mod forecast_dist;
pub mod harness;
pub mod scores;

pub use error::{Error, Result};
