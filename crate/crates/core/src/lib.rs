//! Bayesian quantile regression with a linearly interpolated density (LID)
//! working likelihood.
//!
//! The fitted conditional quantiles `x'β(τ_1) < … < x'β(τ_m)` at each
//! observation define a piecewise-constant density between consecutive
//! quantiles with half-normal tails outside them. Their product is used as an
//! approximate likelihood, and a coordinate-wise Metropolis–Hastings sampler
//! explores the joint posterior of all `m` coefficient vectors while keeping
//! the quantile planes ordered at every observed design row.
//!
//! Module map:
//!
//! * [`model`]: grids, data, coefficient matrices, the check loss, priors.
//! * [`density`]: the interpolated density and its log-likelihood.
//! * [`sampler`]: constrained proposals, the MH kernel and chain driver.
//! * [`summary`]: posterior summaries and quantile contrasts.
//! * [`baselines`]: LP quantile regression, weighted RQ, bootstrap, ALD sampler.
//! * [`experiments`]: simulation models, n×MSE studies, coverage, grid oracle.

pub mod baselines;
pub mod density;
pub mod error;
pub mod experiments;
pub mod model;
pub mod normal;
pub mod rng;
pub mod sampler;
pub mod summary;

pub use density::LidModel;
pub use error::{Error, Result};
pub use model::{check_loss, validate_noncrossing, CoefficientMatrix, Dataset, PriorSpec, QuantileGrid};
pub use sampler::{run_chain, ChainOutput, SamplerConfig};
