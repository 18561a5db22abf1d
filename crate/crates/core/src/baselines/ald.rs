use rand::Rng;
use rand_distr::StandardNormal;

use crate::baselines::rq::rq_fit;
use crate::error::{contract, domain, Result};
use crate::model::{check_tau, dot, rho, Dataset, PriorSpec};
use crate::rng;

/// log f_τ(u) = log τ(1−τ) − ρ_τ(u), the asymmetric Laplace log density.
pub fn ald_log_density(u: f64, tau: f64) -> f64 {
    (tau * (1.0 - tau)).ln() - rho(u, tau)
}

/// Random-walk Metropolis settings for the asymmetric-Laplace sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct AldConfig {
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Per-coordinate step sd; defaults to 0.1 × the prior sd.
    pub proposal_sd: Option<Vec<f64>>,
}

impl AldConfig {
    /// 5 000 iterations, half discarded.
    pub fn with_seed(seed: u64) -> Self {
        Self { iters: 5000, burnin: 2500, thin: 1, seed, proposal_sd: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AldChain {
    pub tau: f64,
    pub draws: Vec<Vec<f64>>,
    pub accept_count: usize,
    pub propose_count: usize,
    pub seed: u64,
}

impl AldChain {
    pub fn posterior_mean(&self) -> Vec<f64> {
        let k = self.draws[0].len();
        let n = self.draws.len() as f64;
        (0..k).map(|c| self.draws.iter().map(|d| d[c]).sum::<f64>() / n).collect()
    }
}

fn ald_loglik(data: &Dataset, tau: f64, beta: &[f64]) -> f64 {
    let c = (tau * (1.0 - tau)).ln();
    data.rows()
        .zip(data.y())
        .map(|(x, &y)| c - rho(y - dot(x, beta), tau))
        .sum()
}

/// Pseudo-posterior draws of β(τ) under the asymmetric-Laplace working
/// likelihood and independent normal priors. The chain starts at the RQ fit
/// and moves all coordinates jointly with a symmetric normal step.
pub fn ald_chain(data: &Dataset, tau: f64, prior: &PriorSpec, cfg: &AldConfig) -> Result<AldChain> {
    check_tau(tau)?;
    let p = data.p();
    if prior.len() != p {
        return contract(format!("prior has {} entries, need {p}", prior.len()));
    }
    if cfg.iters == 0 || cfg.burnin >= cfg.iters || cfg.thin == 0 {
        return domain("need iters > burnin >= 0 and thin >= 1");
    }
    let step: Vec<f64> = match &cfg.proposal_sd {
        Some(s) if s.len() == p && s.iter().all(|v| *v > 0.0) => s.clone(),
        Some(_) => return domain("ALD proposal sd must have one positive entry per coefficient"),
        None => prior.sd().iter().map(|s| 0.1 * s).collect(),
    };
    let log_post = |beta: &[f64]| -> f64 {
        ald_loglik(data, tau, beta) + beta.iter().enumerate().map(|(k, &b)| prior.coord_log_density(k, b)).sum::<f64>()
    };

    let mut r = rng::seeded(cfg.seed);
    let mut beta = rq_fit(data, tau, None)?.beta;
    let mut current = log_post(&beta);
    let mut out = AldChain { tau, draws: Vec::new(), accept_count: 0, propose_count: 0, seed: cfg.seed };
    for it in 0..cfg.iters {
        let cand: Vec<f64> = beta
            .iter()
            .zip(&step)
            .map(|(b, s)| b + s * r.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = log_post(&cand);
        out.propose_count += 1;
        let u: f64 = r.random();
        if u.ln() < lp - current {
            beta = cand;
            current = lp;
            out.accept_count += 1;
        }
        if it >= cfg.burnin && (it - cfg.burnin) % cfg.thin == 0 {
            out.draws.push(beta.clone());
        }
    }
    Ok(out)
}
