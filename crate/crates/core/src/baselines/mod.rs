//! Comparators: check-loss quantile regression (RQ) solved as a linear
//! program, RQ with estimated density weights (EWRQ), the pair bootstrap,
//! and the asymmetric-Laplace working-likelihood sampler.

mod ald;
mod bootstrap;
mod rq;
pub mod simplex;

pub use ald::{ald_chain, ald_log_density, AldChain, AldConfig};
pub use bootstrap::{pair_bootstrap, pair_bootstrap_taus, pair_bootstrap_with, BootstrapResult};
pub use rq::{estimate_weights, rq_fit, weights_from_fits, wrq_fit, RqFit, DEFAULT_DELTA_TAU};
