//! Score-driven volatility models for financial risk management.
//!
//! The conditional return distribution is a skew-Student-t (with Student-t
//! and Normal nested as special cases) whose log-scale follows a score-driven
//! recursion. The crate covers:
//!
//! - closed-form density, CDF, quantile, log-scale score, and sampling
//!   ([`dist`]),
//! - the volatility filter, path simulation, and maximum-likelihood
//!   estimation ([`filter`]),
//! - one-step and simulated multi-step predictive distributions plus a
//!   rolling out-of-sample harness ([`forecast`]),
//! - VaR backtesting: coverage tests, the dynamic quantile test, quantile
//!   loss, and absolute deviations ([`backtest`]).

pub mod backtest;
pub mod dist;
pub mod error;
pub mod filter;
pub mod forecast;
pub mod optim;
pub mod special;

pub use dist::{constants, DistParams, Family, SkstConstants};
pub use error::{Error, Result};
pub use filter::{estimate, estimate_with, filter_path, simulate_path, FilterOutput, FitOptions, FitResult, GasModel};
pub use forecast::{predict_h_step, predict_one_step, roll, var_from_params, RollConfig, RollResult, WindowScheme};
