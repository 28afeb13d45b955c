//! Volatility-targeting strategy lab.
//!
//! Nine model-based volatility forecasters drive leverage on a single risky
//! asset; a model-free policy-gradient agent allocates among the resulting
//! strategies; an anchored walk-forward harness evaluates everything with
//! performance metrics, running-average T-tests, and feature-sensitivity
//! ranking.

pub mod benchmarks;
pub mod error;
pub mod evalkit;
pub mod linalg;
pub mod market_data;
pub mod optimize;
pub mod policy_net;
pub mod rl_env;
pub mod train;
pub mod vol_forecast;
pub mod vol_target;

pub use error::{Error, Result};
