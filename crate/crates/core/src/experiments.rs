//! Simulation models, n×MSE comparison studies, out-of-bag coverage and the
//! small-problem grid posterior used to check the sampler's stationary law.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;

use crate::baselines::{ald_chain, rq_fit, wrq_fit, AldConfig, DEFAULT_DELTA_TAU};
use crate::density::log_density_from_quantiles;
use crate::error::{contract, domain, Error, Result};
use crate::model::{check_tau, dot, Dataset, PriorSpec, QuantileGrid};
use crate::normal;
use crate::rng::{self, derive_seed};
use crate::sampler::{run_chain, SamplerConfig};
use crate::summary::Contrast;

/// The two heteroscedastic simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Example {
    /// y = 5 + x + (1 + x)ε, x ~ LogNormal(0, 1).
    One,
    /// y = 5 + x₁ + x₂ + (1 + x₁ + x₂)ε, x₁ ~ LogNormal(0, 1), x₂ ~ Bernoulli(½).
    Two,
}

impl Example {
    pub fn from_number(k: u32) -> Result<Self> {
        match k {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            _ => domain(format!("unknown example {k}; expected 1 or 2")),
        }
    }

    pub fn p(self) -> usize {
        match self {
            Self::One => 2,
            Self::Two => 3,
        }
    }

    pub fn coef_names(self) -> Vec<String> {
        ["a", "b", "c"][..self.p()].iter().map(|s| s.to_string()).collect()
    }

    /// Coefficients and contrasts reported by default.
    pub fn default_targets(self) -> Vec<Contrast> {
        let specs: &[&str] = match self {
            Self::One => &["b@0.25", "b@0.5", "b@0.75", "b@0.75-b@0.5"],
            Self::Two => &["b@0.5", "b@0.75", "b@0.75-b@0.5", "c@0.5", "c@0.75", "c@0.75-c@0.5"],
        };
        let names = self.coef_names();
        specs.iter().map(|s| Contrast::parse(s, &names).expect("valid built-in target")).collect()
    }

    pub fn generate(self, n: usize, seed: u64) -> Result<Dataset> {
        match self {
            Self::One => gen_example1(n, seed),
            Self::Two => gen_example2(n, seed),
        }
    }
}

fn lognormal() -> LogNormal<f64> {
    LogNormal::new(0.0, 1.0).expect("valid lognormal parameters")
}

/// n draws from the first design, deterministic in `seed`.
pub fn gen_example1(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return domain("need n >= 2");
    }
    let mut r = rng::seeded(seed);
    let ln = lognormal();
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = ln.sample(&mut r);
        let e: f64 = r.sample(StandardNormal);
        x.extend([1.0, xi]);
        y.push(5.0 + xi + (1.0 + xi) * e);
    }
    Dataset::new(2, x, y)
}

/// n draws from the second design, deterministic in `seed`.
pub fn gen_example2(n: usize, seed: u64) -> Result<Dataset> {
    if n < 3 {
        return domain("need n >= 3");
    }
    let mut r = rng::seeded(seed);
    let ln = lognormal();
    let coin = Bernoulli::new(0.5).expect("valid probability");
    let mut x = Vec::with_capacity(3 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x1 = ln.sample(&mut r);
        let x2 = if coin.sample(&mut r) { 1.0 } else { 0.0 };
        let e: f64 = r.sample(StandardNormal);
        x.extend([1.0, x1, x2]);
        y.push(5.0 + x1 + x2 + (1.0 + x1 + x2) * e);
    }
    Dataset::new(3, x, y)
}

/// True conditional-quantile coefficients at `tau`.
pub fn true_coefficients(example: Example, tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let z = normal::quantile(tau);
    Ok(match example {
        Example::One => vec![5.0 + z, 1.0 + z],
        Example::Two => vec![5.0 + z, 1.0 + z, 1.0 + z],
    })
}

/// Estimators compared in the studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Method {
    Rq,
    Ewrq,
    Lid,
    Ald,
    /// Returns the true coefficients; checks the harness.
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rq => "rq",
            Self::Ewrq => "ewrq",
            Self::Lid => "lid",
            Self::Ald => "ald",
            Self::Oracle => "oracle",
        }
    }

    fn purpose(self) -> u64 {
        match self {
            Self::Rq => 1,
            Self::Ewrq => 2,
            Self::Lid => 3,
            Self::Ald => 4,
            Self::Oracle => 5,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rq" => Ok(Self::Rq),
            "ewrq" => Ok(Self::Ewrq),
            "lid" => Ok(Self::Lid),
            "ald" => Ok(Self::Ald),
            "oracle" => Ok(Self::Oracle),
            other => domain(format!("unknown method '{other}'")),
        }
    }
}

/// Knobs shared by every estimator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitSettings {
    pub m0: usize,
    pub refinements: u32,
    pub prior_sd: f64,
    /// Chain length for LID and ALD; LID defaults to 2000·m·p, ALD to 5000.
    pub iters: Option<usize>,
    /// Defaults to half of `iters`.
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub proposal_sd: Option<f64>,
    pub tail_sd: Option<f64>,
    pub delta_tau: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            m0: 15,
            refinements: 0,
            prior_sd: 10.0,
            iters: None,
            burnin: None,
            thin: None,
            proposal_sd: None,
            tail_sd: None,
            delta_tau: DEFAULT_DELTA_TAU,
        }
    }
}

impl FitSettings {
    pub fn grid(&self) -> Result<QuantileGrid> {
        QuantileGrid::make(self.m0, self.refinements)
    }

    pub fn sampler_config(&self, m: usize, p: usize, seed: u64) -> SamplerConfig {
        let base = SamplerConfig::desk_default(m, p, seed);
        let iters = self.iters.unwrap_or(base.iters);
        SamplerConfig {
            iters,
            burnin: self.burnin.unwrap_or(iters / 2),
            thin: self.thin.unwrap_or((iters / 2000).max(1)),
            seed,
            proposal_sd: self.proposal_sd,
            tail_sd: self.tail_sd,
        }
    }

    pub fn ald_config(&self, seed: u64) -> AldConfig {
        let base = AldConfig::with_seed(seed);
        let iters = self.iters.unwrap_or(base.iters);
        AldConfig {
            iters,
            burnin: self.burnin.unwrap_or(iters / 2),
            thin: self.thin.unwrap_or(1),
            seed,
            proposal_sd: None,
        }
    }
}

/// Point estimates of the coefficient vector at each of `taus`: the fit for
/// RQ and EWRQ, the posterior mean for LID and ALD. LID needs every level on
/// the settings' grid.
pub fn point_estimates(
    method: Method,
    data: &Dataset,
    taus: &[f64],
    settings: &FitSettings,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    match method {
        Method::Rq => taus.iter().map(|&t| rq_fit(data, t, None).map(|f| f.beta)).collect(),
        Method::Ewrq => taus.iter().map(|&t| wrq_fit(data, t, settings.delta_tau).map(|f| f.beta)).collect(),
        Method::Lid => {
            let grid = settings.grid()?;
            let idx = grid_indices(&grid, taus)?;
            let prior = PriorSpec::iid(grid.len() * data.p(), 0.0, settings.prior_sd)?;
            let chain = run_chain(data, &grid, &prior, &settings.sampler_config(grid.len(), data.p(), seed))?;
            let mean = chain.posterior_mean()?;
            Ok(idx.iter().map(|&j| mean.row(j).to_vec()).collect())
        }
        Method::Ald => {
            let prior = PriorSpec::iid(data.p(), 0.0, settings.prior_sd)?;
            taus.iter()
                .enumerate()
                .map(|(k, &t)| {
                    ald_chain(data, t, &prior, &settings.ald_config(derive_seed(seed, k as u64, 0)))
                        .map(|c| c.posterior_mean())
                })
                .collect()
        }
        Method::Oracle => contract("the oracle method needs a known simulation model"),
    }
}

/// Grid positions of `taus`, or a domain error naming the first missing level.
pub fn grid_indices(grid: &QuantileGrid, taus: &[f64]) -> Result<Vec<usize>> {
    taus.iter()
        .map(|&t| {
            grid.index_of(t)
                .ok_or_else(|| Error::Domain(format!("level {t} is not on the grid of {} levels", grid.len())))
        })
        .collect()
}

fn distinct_levels(targets: &[Contrast]) -> Vec<f64> {
    let mut taus: Vec<f64> = Vec::new();
    for t in targets.iter().flat_map(Contrast::levels) {
        if !taus.iter().any(|&u| (u - t).abs() < crate::model::LEVEL_MATCH_TOL) {
            taus.push(t);
        }
    }
    taus
}

fn lookup(taus: &[f64], betas: &[Vec<f64>], coef: usize, tau: f64) -> Result<f64> {
    let k = taus
        .iter()
        .position(|&u| (u - tau).abs() < crate::model::LEVEL_MATCH_TOL)
        .ok_or_else(|| Error::Contract(format!("level {tau} was not estimated")))?;
    betas[k]
        .get(coef)
        .copied()
        .ok_or_else(|| Error::Domain(format!("coefficient index {coef} out of range")))
}

/// Values of each target under per-level coefficient vectors.
pub fn evaluate_targets(targets: &[Contrast], taus: &[f64], betas: &[Vec<f64>]) -> Result<Vec<f64>> {
    targets.iter().map(|c| c.evaluate(|coef, tau| lookup(taus, betas, coef, tau))).collect()
}

/// Simulation design for an n×MSE study.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimSpec {
    pub example: Example,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

/// One (method, target) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub method: Method,
    pub target: String,
    /// n times the mean squared error over the replicates that succeeded.
    pub n_times_mse: f64,
    /// n times the standard error of that mean.
    pub se: f64,
    pub reps_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseStudy {
    pub rows: Vec<MseRow>,
    /// True value of each target.
    pub truths: Vec<f64>,
    /// `estimates[method][rep]`: target estimates, `None` when that
    /// replicate failed for that method.
    pub estimates: Vec<Vec<Option<Vec<f64>>>>,
    /// Failed replicates per method.
    pub dropped: Vec<(Method, usize)>,
}

/// Runs every method on `reps` simulated datasets. Replicate `r` draws its
/// data from `derive_seed(seed, r, 0)` whatever methods are requested, and
/// each method's randomness comes from its own derived seed. Replicates run
/// on the current rayon pool; results are gathered in replicate order.
pub fn run_mse_study(
    spec: &SimSpec,
    methods: &[Method],
    targets: &[Contrast],
    settings: &FitSettings,
) -> Result<MseStudy> {
    let p = spec.example.p();
    if spec.reps == 0 {
        return domain("reps must be at least 1");
    }
    if spec.n < p + 1 {
        return domain(format!("n must be at least {}", p + 1));
    }
    if methods.is_empty() || targets.is_empty() {
        return domain("need at least one method and one target");
    }
    let taus = distinct_levels(targets);
    if methods.contains(&Method::Lid) {
        grid_indices(&settings.grid()?, &taus)?;
    }
    let truth_betas = taus
        .iter()
        .map(|&t| true_coefficients(spec.example, t))
        .collect::<Result<Vec<_>>>()?;
    let truths = evaluate_targets(targets, &taus, &truth_betas)?;

    let per_rep: Vec<Vec<Option<Vec<f64>>>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let data = spec.example.generate(spec.n, derive_seed(spec.seed, rep as u64, 0));
            methods
                .iter()
                .map(|&method| {
                    let data = data.as_ref().ok()?;
                    let betas = match method {
                        Method::Oracle => truth_betas.clone(),
                        _ => {
                            let seed = derive_seed(spec.seed, rep as u64, method.purpose());
                            point_estimates(method, data, &taus, settings, seed).ok()?
                        }
                    };
                    evaluate_targets(targets, &taus, &betas).ok()
                })
                .collect()
        })
        .collect();

    let estimates: Vec<Vec<Option<Vec<f64>>>> = (0..methods.len())
        .map(|k| per_rep.iter().map(|r| r[k].clone()).collect())
        .collect();
    let n = spec.n as f64;
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for (k, &method) in methods.iter().enumerate() {
        let ok: Vec<&Vec<f64>> = estimates[k].iter().flatten().collect();
        dropped.push((method, spec.reps - ok.len()));
        for (t, target) in targets.iter().enumerate() {
            let sq: Vec<f64> = ok.iter().map(|e| (e[t] - truths[t]).powi(2)).collect();
            let (mean, se) = mean_and_se(&sq);
            rows.push(MseRow {
                method,
                target: target.label.clone(),
                n_times_mse: n * mean,
                se: n * se,
                reps_used: sq.len(),
            });
        }
    }
    Ok(MseStudy { rows, truths, estimates, dropped })
}

/// Sample mean and its standard error; NaN where undefined.
pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Random train/test split; returns `(train, test)` row indices, each sorted.
pub fn split_train_test(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return domain(format!("test fraction must lie in (0, 1), got {test_fraction}"));
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 {
        return contract("test split is empty");
    }
    if n_test >= n {
        return contract("training split is empty");
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Fraction of responses strictly below the plane `beta`.
pub fn coverage(data: &Dataset, beta: &[f64]) -> f64 {
    let below = data.rows().zip(data.y()).filter(|(x, &y)| y < dot(x, beta)).count();
    below as f64 / data.n() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageRow {
    pub tau: f64,
    pub coverage: f64,
    pub n_test: usize,
}

/// Splits `data`, fits on the training rows with `fit` (returning one
/// coefficient vector per level) and reports per-level test coverage.
pub fn oob_coverage(
    data: &Dataset,
    taus: &[f64],
    test_fraction: f64,
    seed: u64,
    fit: impl FnOnce(&Dataset, &[f64]) -> Result<Vec<Vec<f64>>>,
) -> Result<Vec<CoverageRow>> {
    let (train_idx, test_idx) = split_train_test(data.n(), test_fraction, seed)?;
    let train = data.subset(&train_idx)?;
    let test = data.subset(&test_idx)?;
    let betas = fit(&train, taus)?;
    if betas.len() != taus.len() {
        return contract("fit returned the wrong number of coefficient vectors");
    }
    Ok(taus
        .iter()
        .zip(&betas)
        .map(|(&tau, beta)| CoverageRow { tau, coverage: coverage(&test, beta), n_test: test.n() })
        .collect())
}

/// Discretized two-level intercept-only posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPosterior {
    pub lo: f64,
    pub hi: f64,
    pub resolution: usize,
    /// Mass of each of `resolution` equal cells of [lo, hi) for β(τ_1).
    pub marginal_lower: Vec<f64>,
    /// Same for β(τ_2).
    pub marginal_upper: Vec<f64>,
}

impl GridPosterior {
    pub fn cell_width(&self) -> f64 {
        (self.hi - self.lo) / self.resolution as f64
    }

    /// Total-variation distance between one marginal, merged into `bins`
    /// equal bins, and the empirical distribution of `samples` on the same
    /// bins. Samples outside [lo, hi) count against the distance.
    pub fn tv_to_samples(&self, upper: bool, samples: &[f64], bins: usize) -> Result<f64> {
        if bins == 0 || bins > self.resolution || samples.is_empty() {
            return contract("need 1 <= bins <= resolution and a non-empty sample");
        }
        let marginal = if upper { &self.marginal_upper } else { &self.marginal_lower };
        let mut oracle = vec![0.0; bins];
        for (c, &mass) in marginal.iter().enumerate() {
            oracle[c * bins / self.resolution] += mass;
        }
        let mut hist = vec![0.0; bins];
        let mut outside = 0.0;
        let w = 1.0 / samples.len() as f64;
        let width = (self.hi - self.lo) / bins as f64;
        for &s in samples {
            let b = ((s - self.lo) / width).floor();
            if b >= 0.0 && (b as usize) < bins {
                hist[b as usize] += w;
            } else {
                outside += w;
            }
        }
        Ok(0.5 * (oracle.iter().zip(&hist).map(|(a, b)| (a - b).abs()).sum::<f64>() + outside))
    }
}

fn log_posterior_2(data: &Dataset, levels: &[f64], prior: &PriorSpec, tail_sd: f64, b1: f64, b2: f64) -> f64 {
    let q = [b1, b2];
    let ll: f64 = data.y().iter().map(|&y| log_density_from_quantiles(levels, &q, y, tail_sd)).sum();
    ll + prior.coord_log_density(0, b1) + prior.coord_log_density(1, b2)
}

/// Prior × LID likelihood for an intercept-only model with two levels,
/// evaluated on a `resolution²` grid of cells over [lo, hi)² restricted to
/// β(τ_1) < β(τ_2) and normalized to total mass 1. Cells straddling the
/// diagonal contribute half their area, evaluated at their feasible half's
/// centre.
pub fn grid_posterior_oracle(
    data: &Dataset,
    grid: &QuantileGrid,
    prior: &PriorSpec,
    tail_sd: f64,
    lo: f64,
    hi: f64,
    resolution: usize,
) -> Result<GridPosterior> {
    if data.p() != 1 || grid.len() != 2 || data.n() > 10 {
        return contract("grid oracle needs an intercept-only model, two levels and n <= 10");
    }
    if resolution < 100 {
        return contract("grid oracle needs at least 100 cells per axis");
    }
    if prior.len() != 2 || !(lo < hi) || !(tail_sd > 0.0) {
        return contract("bad prior, range or tail sd for the grid oracle");
    }
    let h = (hi - lo) / resolution as f64;
    let levels = grid.levels();
    let mut logs = vec![f64::NEG_INFINITY; resolution * resolution];
    for a in 0..resolution {
        let b1 = lo + (a as f64 + 0.5) * h;
        for b in a..resolution {
            let b2 = lo + (b as f64 + 0.5) * h;
            logs[a * resolution + b] = if a == b {
                (0.5f64).ln() + log_posterior_2(data, levels, prior, tail_sd, b1 - 0.25 * h, b2 + 0.25 * h)
            } else {
                log_posterior_2(data, levels, prior, tail_sd, b1, b2)
            };
        }
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numerical("grid oracle found no mass".into()));
    }
    let mut lower = vec![0.0; resolution];
    let mut upper = vec![0.0; resolution];
    let mut total = 0.0;
    for a in 0..resolution {
        for b in a..resolution {
            let w = (logs[a * resolution + b] - top).exp();
            lower[a] += w;
            upper[b] += w;
            total += w;
        }
    }
    lower.iter_mut().chain(upper.iter_mut()).for_each(|v| *v /= total);
    Ok(GridPosterior { lo, hi, resolution, marginal_lower: lower, marginal_upper: upper })
}
