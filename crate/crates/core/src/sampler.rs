//! Coordinate-wise Metropolis–Hastings over the coefficient matrix.
//!
//! Each step picks a level `j` and a coefficient `l` uniformly, computes the
//! open interval of values for `β_l(τ_j)` that keeps every fitted quantile
//! ordered at every design row, and proposes inside it: uniformly when both
//! ends are finite, otherwise from a normal centred at the current value and
//! truncated to the interval. The acceptance ratio combines the untruncated
//! prior, the LID log-likelihood and the exact proposal-density ratio.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::baselines::{rq_fit, RqFit};
use crate::density::{log_density_from_quantiles, LidModel};
use crate::error::{contract, domain, Error, Result};
use crate::model::{dot, validate_noncrossing, CoefficientMatrix, Dataset, PriorSpec, QuantileGrid};
use crate::normal;
use crate::rng;

/// Chain length, thinning, seed and optional scale overrides.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplerConfig {
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Scale of truncated-normal proposals. Default: half the residual sd of
    /// the median RQ fit, divided by √p.
    pub proposal_sd: Option<f64>,
    /// σ of the half-normal tails. Default: the residual sd of the median RQ fit.
    pub tail_sd: Option<f64>,
}

impl SamplerConfig {
    /// `2000·m·p` iterations, half burn-in, thinned to about 1 000 draws.
    pub fn desk_default(m: usize, p: usize, seed: u64) -> Self {
        let iters = 2000 * m * p;
        Self {
            iters,
            burnin: iters / 2,
            thin: (iters / 2000).max(1),
            seed,
            proposal_sd: None,
            tail_sd: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 || self.burnin >= self.iters {
            return domain(format!("need iters > burnin (iters {}, burnin {})", self.iters, self.burnin));
        }
        if self.thin == 0 {
            return domain("thin must be at least 1");
        }
        for (name, v) in [("proposal sd", self.proposal_sd), ("tail sd", self.tail_sd)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return domain(format!("{name} must be positive, got {v}"));
                }
            }
        }
        Ok(())
    }
}

/// Post-burn-in, thinned draws and bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub draws: Vec<CoefficientMatrix>,
    pub accept_count: usize,
    pub propose_count: usize,
    pub seed: u64,
    pub final_loglik: f64,
    pub tail_sd: f64,
    pub proposal_sd: f64,
}

impl ChainOutput {
    pub fn acceptance_rate(&self) -> f64 {
        self.accept_count as f64 / self.propose_count.max(1) as f64
    }

    /// Element-wise posterior mean of B.
    pub fn posterior_mean(&self) -> Result<CoefficientMatrix> {
        let first = self.draws.first().ok_or_else(|| Error::Contract("empty chain".into()))?;
        let k = self.draws.len() as f64;
        let mut acc = vec![0.0; first.values().len()];
        for d in &self.draws {
            for (a, v) in acc.iter_mut().zip(d.values()) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= k);
        CoefficientMatrix::new(first.m(), first.p(), acc)
    }
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Parallel quantile planes plus the median fit they were built from.
fn init_with_median(data: &Dataset, grid: &QuantileGrid) -> Result<(CoefficientMatrix, RqFit)> {
    let median = rq_fit(data, 0.5, None)?;
    let mut intercepts = grid
        .levels()
        .iter()
        .map(|&t| rq_fit(data, t, None).map(|f| f.beta[0]))
        .collect::<Result<Vec<f64>>>()?;
    intercepts.sort_by(f64::total_cmp);
    let top = intercepts.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let eps = 1e-6 * (1.0 + top);
    // levels sharing an LP vertex can differ by rounding noise only
    if intercepts.windows(2).any(|w| w[1] - w[0] < eps) {
        for (j, a) in intercepts.iter_mut().enumerate() {
            *a += eps * j as f64;
        }
    }
    let p = data.p();
    let mut values = Vec::with_capacity(grid.len() * p);
    for a in intercepts {
        values.push(a);
        values.extend_from_slice(&median.beta[1..]);
    }
    Ok((CoefficientMatrix::new(grid.len(), p, values)?, median))
}

/// Starting point: every level shares the median-fit slopes, intercepts are
/// the per-level RQ intercepts sorted increasingly. When two intercepts are
/// tied or closer than `ε = 1e−6·(1 + max |intercept|)`, every level `j` is
/// shifted up by `ε·j`. Parallel planes never cross.
pub fn init_parallel(data: &Dataset, grid: &QuantileGrid) -> Result<CoefficientMatrix> {
    init_with_median(data, grid).map(|(b, _)| b)
}

/// Bounds on one coordinate implied by a single design row: `rest` is the
/// fitted value without the coordinate's term, `q_prev`/`q_next` the
/// neighbouring levels' fitted values (absent at the ends of the grid).
#[inline]
fn row_bounds(a: f64, rest: f64, q_prev: Option<f64>, q_next: Option<f64>) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    if a == 0.0 {
        return (lo, hi);
    }
    if let Some(q) = q_prev {
        let b = (q - rest) / a;
        if a > 0.0 {
            lo = b;
        } else {
            hi = b;
        }
    }
    if let Some(q) = q_next {
        let b = (q - rest) / a;
        if a > 0.0 {
            hi = b;
        } else {
            lo = b;
        }
    }
    (lo, hi)
}

#[inline]
fn rest_without(x: &[f64], row: &[f64], l: usize) -> f64 {
    x.iter()
        .zip(row)
        .enumerate()
        .filter(|(t, _)| *t != l)
        .map(|(_, (a, b))| a * b)
        .sum()
}

/// Open interval of values for `β_l(τ_j)` (zero-based `j`, `l`) that keeps
/// the fitted quantiles strictly ordered at every row of `data`, all other
/// entries held fixed. Per-row bounds are intersected.
pub fn proposal_bounds(coefs: &CoefficientMatrix, data: &Dataset, j: usize, l: usize) -> Result<(f64, f64)> {
    if j >= coefs.m() || l >= coefs.p() {
        return contract(format!("coordinate ({j}, {l}) outside a {}x{} matrix", coefs.m(), coefs.p()));
    }
    if !validate_noncrossing(coefs, data)? {
        return contract("proposal bounds need a non-crossing coefficient matrix");
    }
    let m = coefs.m();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for x in data.rows() {
        let q_prev = (j > 0).then(|| coefs.fitted(j - 1, x));
        let q_next = (j + 1 < m).then(|| coefs.fitted(j + 1, x));
        let (a, b) = row_bounds(x[l], rest_without(x, coefs.row(j), l), q_prev, q_next);
        lo = lo.max(a);
        hi = hi.min(b);
    }
    Ok((lo, hi))
}

/// A proposed coordinate value with forward and reverse proposal log
/// densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub value: f64,
    pub log_q_forward: f64,
    pub log_q_reverse: f64,
}

/// Log density at `x` of N(mean, sd²) truncated to (lower, upper).
pub fn truncated_normal_log_density(x: f64, mean: f64, sd: f64, lower: f64, upper: f64) -> f64 {
    if !(x > lower && x < upper) {
        return f64::NEG_INFINITY;
    }
    normal::log_phi((x - mean) / sd) - sd.ln() - normal::log_interval_mass((lower - mean) / sd, (upper - mean) / sd)
}

/// Draws a new value inside (lower, upper): uniform if both ends are finite,
/// else a normal around `current` truncated to the interval (by rejection;
/// the interval holds at least half the mass since it contains `current` and
/// one unbounded side).
pub fn propose_coordinate<R: Rng + ?Sized>(
    current: f64,
    lower: f64,
    upper: f64,
    proposal_sd: f64,
    rng: &mut R,
) -> Result<Proposal> {
    if !(lower < current && current < upper) {
        return contract(format!("current value {current} not inside ({lower}, {upper})"));
    }
    if !(proposal_sd > 0.0) {
        return domain("proposal sd must be positive");
    }
    if lower.is_finite() && upper.is_finite() {
        let value = rng.random_range(lower..upper);
        let lq = -(upper - lower).ln();
        return Ok(Proposal { value, log_q_forward: lq, log_q_reverse: lq });
    }
    let value = loop {
        let v = current + proposal_sd * rng.sample::<f64, _>(StandardNormal);
        if v > lower && v < upper {
            break v;
        }
    };
    Ok(Proposal {
        value,
        log_q_forward: truncated_normal_log_density(value, current, proposal_sd, lower, upper),
        log_q_reverse: truncated_normal_log_density(current, value, proposal_sd, lower, upper),
    })
}

/// log of the MH ratio π(B*)L(B*)q(B*→B) / π(B)L(B)q(B→B*).
#[inline]
pub fn log_acceptance_ratio(delta_log_prior: f64, delta_loglik: f64, proposal: &Proposal) -> f64 {
    delta_log_prior + delta_loglik + proposal.log_q_reverse - proposal.log_q_forward
}

#[inline]
fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// Everything the kernel needs besides the current state.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    pub data: &'a Dataset,
    pub grid: &'a QuantileGrid,
    pub prior: &'a PriorSpec,
    pub tail_sd: f64,
    pub proposal_sd: f64,
}

impl Target<'_> {
    pub fn loglik(&self, coefs: &CoefficientMatrix) -> Result<f64> {
        LidModel::new(coefs.clone(), self.grid.clone(), self.tail_sd)?.loglik(self.data)
    }

    /// Unnormalized log posterior; −∞ off the feasible region.
    pub fn log_posterior(&self, coefs: &CoefficientMatrix) -> Result<f64> {
        let lp = self.prior.log_density(coefs, self.data)?;
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        Ok(lp + self.loglik(coefs)?)
    }

    fn check(&self, coefs: &CoefficientMatrix) -> Result<()> {
        if coefs.m() != self.grid.len() || coefs.p() != self.data.p() || self.prior.len() != coefs.values().len() {
            return contract("state, grid, data and prior dimensions disagree");
        }
        Ok(())
    }
}

/// Result of one kernel application.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: CoefficientMatrix,
    pub loglik: f64,
    pub accepted: bool,
    /// Updated coordinate `(j, l)`.
    pub coordinate: (usize, usize),
    pub proposal: Option<Proposal>,
}

/// One MH step by full likelihood recomputation. Consumes random numbers in
/// the same order as [`LidSampler::step`], so both paths trace the same chain.
pub fn mh_step<R: Rng + ?Sized>(
    state: &CoefficientMatrix,
    loglik: f64,
    target: &Target<'_>,
    rng: &mut R,
) -> Result<StepOutcome> {
    target.check(state)?;
    let j = rng.random_range(0..state.m());
    let l = rng.random_range(0..state.p());
    let unchanged = |accepted_u: bool| StepOutcome {
        state: state.clone(),
        loglik,
        accepted: accepted_u,
        coordinate: (j, l),
        proposal: None,
    };
    let (lo, hi) = proposal_bounds(state, target.data, j, l)?;
    let cur = state.get(j, l);
    if !(lo < cur && cur < hi) {
        let _ = rng.random::<f64>();
        return Ok(unchanged(false));
    }
    let prop = propose_coordinate(cur, lo, hi, target.proposal_sd, rng)?;
    let mut cand = state.clone();
    cand.set(j, l, prop.value);
    let idx = j * state.p() + l;
    let cand_ll = if validate_noncrossing(&cand, target.data)? {
        target.loglik(&cand)?
    } else {
        f64::NEG_INFINITY
    };
    let dprior = target.prior.coord_log_density(idx, prop.value) - target.prior.coord_log_density(idx, cur);
    let ratio = log_acceptance_ratio(dprior, cand_ll - loglik, &prop);
    if accept(ratio, rng) {
        Ok(StepOutcome { state: cand, loglik: cand_ll, accepted: true, coordinate: (j, l), proposal: Some(prop) })
    } else {
        Ok(StepOutcome { proposal: Some(prop), ..unchanged(false) })
    }
}

/// Incremental kernel. Caches every fitted quantile and every observation's
/// log density; an update of row `j` only recomputes observations whose
/// response lies between the neighbouring quantiles `q_{j−1}` and `q_{j+1}`.
#[derive(Debug, Clone)]
pub struct LidSampler<'a> {
    data: &'a Dataset,
    levels: Vec<f64>,
    prior: &'a PriorSpec,
    tail_sd: f64,
    proposal_sd: f64,
    state: CoefficientMatrix,
    // fitted[i * m + j] = x_i'β(τ_j)
    fitted: Vec<f64>,
    contrib: Vec<f64>,
    loglik: f64,
    new_q: Vec<f64>,
    changes: Vec<(usize, f64)>,
    row_buf: Vec<f64>,
    q_buf: Vec<f64>,
}

impl<'a> LidSampler<'a> {
    pub fn new(start: CoefficientMatrix, target: &Target<'a>) -> Result<Self> {
        target.check(&start)?;
        if !validate_noncrossing(&start, target.data)? {
            return contract("starting coefficients cross at an observed row");
        }
        let (n, m) = (target.data.n(), start.m());
        let levels = target.grid.levels().to_vec();
        let mut fitted = Vec::with_capacity(n * m);
        let mut contrib = Vec::with_capacity(n);
        for (x, &y) in target.data.rows().zip(target.data.y()) {
            let start_len = fitted.len();
            fitted.extend((0..m).map(|j| start.fitted(j, x)));
            contrib.push(log_density_from_quantiles(&levels, &fitted[start_len..], y, target.tail_sd));
        }
        let loglik = contrib.iter().sum();
        Ok(Self {
            data: target.data,
            levels,
            prior: target.prior,
            tail_sd: target.tail_sd,
            proposal_sd: target.proposal_sd,
            row_buf: vec![0.0; start.p()],
            q_buf: vec![0.0; m],
            state: start,
            fitted,
            contrib,
            loglik,
            new_q: vec![0.0; n],
            changes: Vec::new(),
        })
    }

    pub fn state(&self) -> &CoefficientMatrix {
        &self.state
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    fn bounds(&self, j: usize, l: usize) -> (f64, f64) {
        let (m, p) = (self.state.m(), self.state.p());
        let row = self.state.row(j);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..self.data.n() {
            let x = &self.data.x()[i * p..(i + 1) * p];
            let q_prev = (j > 0).then(|| self.fitted[i * m + j - 1]);
            let q_next = (j + 1 < m).then(|| self.fitted[i * m + j + 1]);
            let (a, b) = row_bounds(x[l], rest_without(x, row, l), q_prev, q_next);
            lo = lo.max(a);
            hi = hi.min(b);
        }
        (lo, hi)
    }

    /// One MH step; returns whether the move was accepted.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<bool> {
        let (m, p, n) = (self.state.m(), self.state.p(), self.data.n());
        let j = rng.random_range(0..m);
        let l = rng.random_range(0..p);
        let (lo, hi) = self.bounds(j, l);
        let cur = self.state.get(j, l);
        if !(lo < cur && cur < hi) {
            let _ = rng.random::<f64>();
            return Ok(false);
        }
        let prop = propose_coordinate(cur, lo, hi, self.proposal_sd, rng)?;

        self.row_buf.copy_from_slice(self.state.row(j));
        self.row_buf[l] = prop.value;
        let ys = self.data.y();
        let mut feasible = true;
        self.changes.clear();
        for i in 0..n {
            let x = &self.data.x()[i * p..(i + 1) * p];
            let q = dot(&self.row_buf, x);
            self.new_q[i] = q;
            let base = i * m;
            let lo_q = if j > 0 { self.fitted[base + j - 1] } else { f64::NEG_INFINITY };
            let hi_q = if j + 1 < m { self.fitted[base + j + 1] } else { f64::INFINITY };
            if !(q > lo_q && q < hi_q) {
                feasible = false;
                break;
            }
            let y = ys[i];
            if y < lo_q || y >= hi_q {
                continue;
            }
            self.q_buf.copy_from_slice(&self.fitted[base..base + m]);
            self.q_buf[j] = q;
            self.changes.push((i, log_density_from_quantiles(&self.levels, &self.q_buf, y, self.tail_sd)));
        }

        let cand_ll = if feasible {
            let mut total = 0.0;
            let mut next = self.changes.iter().peekable();
            for (i, &c) in self.contrib.iter().enumerate() {
                match next.peek() {
                    Some(&&(k, v)) if k == i => {
                        total += v;
                        next.next();
                    }
                    _ => total += c,
                }
            }
            total
        } else {
            f64::NEG_INFINITY
        };
        let idx = j * p + l;
        let dprior = self.prior.coord_log_density(idx, prop.value) - self.prior.coord_log_density(idx, cur);
        let ratio = log_acceptance_ratio(dprior, cand_ll - self.loglik, &prop);
        if !accept(ratio, rng) {
            return Ok(false);
        }
        for i in 0..n {
            self.fitted[i * m + j] = self.new_q[i];
        }
        for &(i, v) in &self.changes {
            self.contrib[i] = v;
        }
        self.state.set(j, l, prop.value);
        self.loglik = cand_ll;
        Ok(true)
    }
}

/// Default (tail sd, proposal sd) from the median-fit residual spread.
fn default_scales(data: &Dataset, median: &RqFit) -> (f64, f64) {
    let resid: Vec<f64> = data.rows().zip(data.y()).map(|(x, &y)| y - dot(x, &median.beta)).collect();
    let mut s = sample_sd(&resid);
    if !(s > 0.0 && s.is_finite()) {
        s = 1.0;
    }
    (s, 0.5 * s / (data.p() as f64).sqrt())
}

/// Runs the LID sampler from the parallel-planes start, keeping every
/// `thin`-th state after `burnin`. Deterministic in all inputs and the seed.
pub fn run_chain(data: &Dataset, grid: &QuantileGrid, prior: &PriorSpec, cfg: &SamplerConfig) -> Result<ChainOutput> {
    cfg.validate()?;
    if prior.len() != grid.len() * data.p() {
        return contract(format!("prior has {} entries, need m*p = {}", prior.len(), grid.len() * data.p()));
    }
    let (start, median) = init_with_median(data, grid)?;
    let (tail_default, prop_default) = default_scales(data, &median);
    let tail_sd = cfg.tail_sd.unwrap_or(tail_default);
    let proposal_sd = cfg.proposal_sd.unwrap_or(prop_default);
    run_chain_from(start, &Target { data, grid, prior, tail_sd, proposal_sd }, cfg)
}

/// Runs the sampler from an explicit feasible start.
pub fn run_chain_from(start: CoefficientMatrix, target: &Target<'_>, cfg: &SamplerConfig) -> Result<ChainOutput> {
    cfg.validate()?;
    let mut sampler = LidSampler::new(start, target)?;
    let mut r = rng::seeded(cfg.seed);
    let mut out = ChainOutput {
        draws: Vec::with_capacity((cfg.iters - cfg.burnin).div_ceil(cfg.thin)),
        accept_count: 0,
        propose_count: 0,
        seed: cfg.seed,
        final_loglik: 0.0,
        tail_sd: target.tail_sd,
        proposal_sd: target.proposal_sd,
    };
    for it in 0..cfg.iters {
        out.propose_count += 1;
        if sampler.step(&mut r)? {
            out.accept_count += 1;
        }
        if it >= cfg.burnin && (it - cfg.burnin) % cfg.thin == 0 {
            out.draws.push(sampler.state().clone());
        }
    }
    out.final_loglik = sampler.loglik();
    Ok(out)
}
