//! Bayesian quantile regression for partially linear additive models.

pub mod cli;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod metrics;
pub mod model;
pub mod samplers;
pub mod sim;
pub mod spline;
pub mod variants;

pub use cli::cli_main;
pub use error::{Error, Result};
