//! Grouped functional time series forecasting.
//!
//! The pipeline turns a panel of age-specific mortality rates into coherent
//! point and interval forecasts:
//!
//! 1. [`smoothing`] — weighted penalized regression spline smoothing of each
//!    year's log-mortality curve, with a monotone constraint at old ages.
//! 2. [`lrcov`] — kernel long-run covariance estimation with a plug-in
//!    bandwidth, for one series or a stacked block of series.
//! 3. [`fpca`] — dynamic functional principal component analysis on the
//!    long-run covariance; component count chosen at 90% explained variance.
//! 4. [`scorecast`] — automatic ARIMA forecasting of the component scores.
//! 5. [`assemble`] — point forecast curves plus calibrated nonparametric
//!    bootstrap prediction intervals.
//! 6. [`reconcile`] — exposure-weighted summing matrix and bottom-up / OLS /
//!    MinT reconciliation across the disaggregation structure.
//! 7. [`backtest`] — expanding-window evaluation with RMSFE and mean interval
//!    score comparison grids.

pub mod assemble;
pub mod backtest;
pub mod config;
pub mod error;
pub mod fpca;
pub mod lrcov;
pub mod panel;
pub mod plot;
pub mod reconcile;
pub mod scorecast;
pub mod smoothing;

pub use error::{Error, Result};
