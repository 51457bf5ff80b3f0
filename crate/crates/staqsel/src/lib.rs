//! Bayesian effect selection for structured additive quantile regression.
//!
//! The library fits additive quantile-regression models by Gibbs sampling:
//! the check-loss likelihood is represented as a Gaussian scale mixture,
//! each covariate enters through a linear part and a spline deviation, and
//! every part carries a scalar importance parameter under a spike-and-slab
//! prior whose hyperparameters are elicited from interpretable sup-norm
//! statements about effect sizes. The `main` binary exposes fitting,
//! synthetic-data generation, prior elicitation, and self-verification as
//! subcommands.

pub mod basis;
pub mod config;
pub mod data;
pub mod dist;
pub mod elicit;
pub mod error;
pub mod geweke;
pub mod gibbs;
pub mod model;
pub mod oracle;
pub mod runner;
pub mod scenario;
pub mod stream;
pub mod summary;

pub use error::{Error, Result};
